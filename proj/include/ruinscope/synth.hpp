#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ruinscope/ingest.hpp"

namespace ruinscope::synth {

struct SynthDisaster {
  std::string id;
  std::string type;
};

/// The five disasters used by the built-in experiment suite.
std::vector<SynthDisaster> builtin_disasters();

struct SynthConfig {
  std::size_t chips = 50;
  std::size_t min_buildings = 10;
  std::size_t max_buildings = 30;
  int chip_size = 256;
  int min_side = 14;
  int max_side = 34;
  /// Length scale (px) of the random damage field; larger is smoother.
  double correlation_length = 32.0;
  std::size_t fourier_features = 64;
  /// Field thresholds: < low is no damage, > high is major/destroyed.
  double low_threshold = -0.3;
  double high_threshold = 0.5;
  /// Probability that a building's class is redrawn uniformly.
  double mixing_noise = 0.0;
  double unclassified_fraction = 0.0;
  /// Post brightness shift per class step.
  double damage_step = 0.12;
  /// Weight of the mean neighbor perturbation added to a building's own.
  double coupling = 1.0;
  double pixel_noise = 0.03;
  std::vector<SynthDisaster> disasters = builtin_disasters();
};

/// Throws ConfigError on an inconsistent configuration.
void validate(const SynthConfig& config);

nlohmann::json to_json(const SynthConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct SynthChip {
  ingest::ChipRecord record;
  /// Classes before mixing noise and unclassified masking.
  std::vector<int> field_class;
};

/// Chip `index` of the corpus; depends only on (config, seed, index).
SynthChip generate_chip(const SynthConfig& config, std::uint64_t seed, std::size_t index);

std::vector<SynthChip> generate(const SynthConfig& config, std::uint64_t seed);

/// Label JSON in the native ingest schema.
std::string label_json(const ingest::ChipRecord& record);

/// Writes labels/, images/ and manifest.csv under out_dir; returns the rows.
std::vector<ingest::ManifestRow> write_corpus(const SynthConfig& config, std::uint64_t seed,
                                              const std::filesystem::path& out_dir);

/// Fraction of Delaunay edges joining two buildings of the same class
/// (join-count statistic); empty when the chip has no edges.
std::optional<double> same_class_edge_fraction(std::span<const geo::Point2> centroids, std::span<const int> classes);

}  // namespace ruinscope::synth
