#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ruinscope/graph.hpp"
#include "ruinscope/metrics.hpp"
#include "ruinscope/models.hpp"

namespace ruinscope::experiments {

/// How node features reach the head: the encoder trained end to end, a
/// randomly initialized encoder run once per chip, or external feature files.
enum class EncoderMode { Train, Frozen, External };
enum class LeakUnit { Chips, Buildings };

std::string_view encoder_mode_name(EncoderMode mode);
EncoderMode parse_encoder_mode(std::string_view name);
std::string_view leak_unit_name(LeakUnit unit);
LeakUnit parse_leak_unit(std::string_view name);

struct ExperimentConfig {
  std::string name;
  std::vector<std::string> train_disasters;
  std::string target_disaster;
  double leak_fraction = 0.0;
  LeakUnit leak_unit = LeakUnit::Chips;
  /// Target-disaster partition: training side (used or leaked), test, hold.
  double train_ratio = 0.6;
  double test_ratio = 0.2;
  double hold_ratio = 0.2;
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  double lr = 3e-4;
  std::size_t batch_nodes = 256;
  std::size_t fanout = graph::kAllNeighbors;
  bool class_weighting = true;
  std::vector<models::HeadKind> heads{models::HeadKind::Mlp, models::HeadKind::Sage};
  EncoderMode encoder_mode = EncoderMode::Train;
  models::ModelConfig model;
};

/// Throws ConfigError when fields are inconsistent.
void validate(const ExperimentConfig& config);

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep `base` values; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const ExperimentConfig& base = {});

/// Single config object, or {"experiments": [...]} with an optional
/// "defaults" object applied under each entry.
std::vector<ExperimentConfig> experiment_list_from_json(const nlohmann::json& j, const ExperimentConfig& base = {});

/// Four cross-disaster train/test configurations, all targeting socal-fire.
std::vector<ExperimentConfig> standard_suite(const ExperimentConfig& base);

std::string_view model_display_name(models::HeadKind head);
std::string_view model_key(models::HeadKind head);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> hold;
  std::vector<std::size_t> leaked;
};

/// Chip-level train/test/hold split over `graphs` (indices into it).
Split split(std::span<const graph::ChipGraph> graphs, const ExperimentConfig& config);

nlohmann::json split_manifest(std::span<const graph::ChipGraph> graphs, const Split& split);

/// N / (K * n_c) over labeled nodes; zero for absent classes.
std::vector<double> class_weights(std::span<const graph::ChipGraph* const> graphs, std::size_t classes);

struct FitOptions {
  std::size_t epochs = 30;
  double lr = 3e-4;
  std::size_t batch_nodes = 256;
  std::size_t fanout = graph::kAllNeighbors;
  bool class_weighting = true;
  bool train_encoder = true;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::optional<double> test_macro_f1;
};

struct FitResult {
  std::vector<EpochLog> log;
  /// Epoch whose parameters were retained (best test macro F1, else last).
  std::size_t best_epoch = 0;
};

using Model = models::DamageModel<float>;

/// Adam on weighted cross-entropy. With a non-empty test set the parameters
/// of the epoch with the best test macro F1 are restored at the end.
/// A non-finite loss throws NonFiniteLoss naming the epoch.
FitResult fit(Model& model, std::span<const graph::ChipGraph* const> train,
              std::span<const graph::ChipGraph* const> test, const FitOptions& options,
              const std::function<void(const EpochLog&)>& progress = {});

struct Predictions {
  std::vector<double> probs;  // [n, K] over labeled nodes
  std::vector<int> labels;
  std::vector<std::string> node_ids;
};

Predictions predict(const Model& model, std::span<const graph::ChipGraph* const> graphs, std::size_t batch_nodes);

metrics::Report evaluate(const Model& model, std::span<const graph::ChipGraph* const> graphs,
                         std::size_t batch_nodes);

inline constexpr std::array<std::string_view, 4> kMetricKeys{"accuracy", "macro_f1", "weighted_f1", "auc"};
inline constexpr std::array<std::string_view, 3> kSplitNames{"train", "test", "hold"};

std::optional<double> metric_value(const metrics::Report& report, std::string_view key);

struct ModelResult {
  models::HeadKind head = models::HeadKind::Sage;
  std::array<metrics::Report, 3> splits;  // train, test, hold
  std::array<std::optional<double>, 4> gaps;  // kMetricKeys order
  FitResult fit;
  double seconds = 0.0;
};

struct ExperimentReport {
  std::size_t index = 1;
  ExperimentConfig config;
  nlohmann::json splits;
  std::vector<ModelResult> models;
  double seconds = 0.0;
};

/// train - hold per metric; empty when either side is undefined.
std::array<std::optional<double>, 4> generalization_gaps(const metrics::Report& train, const metrics::Report& hold);

/// Graphs must carry features matching config.encoder_mode (crops for
/// Train, embeddings otherwise).
ExperimentReport run_experiment(std::span<const graph::ChipGraph> graphs, const ExperimentConfig& config,
                                std::size_t index = 1, const std::function<void(const std::string&)>& log = {});

nlohmann::json to_json(const ModelResult& result);
nlohmann::json to_json(const ExperimentReport& report);
nlohmann::json suite_json(std::span<const ExperimentReport> reports);

/// Wide layout: one row per (experiment, split), one block of
/// Acc, Macro F1, Weighted F1, AUC per model, Siamese CNN block first.
std::string table_csv(std::span<const ExperimentReport> reports);

/// experiment_index,model,metric,train_minus_hold
std::string gap_csv(std::span<const ExperimentReport> reports);

struct ReportPaths {
  std::filesystem::path report_json;
  std::filesystem::path table_csv;
  std::filesystem::path gap_csv;
};

/// Writes report.json, table.csv and gaps.csv atomically into out_dir.
ReportPaths write_reports(const std::filesystem::path& out_dir, std::span<const ExperimentReport> reports);

/// Loads every cached graph, keeping only the given disasters when the
/// list is non-empty, and prepares its features for `mode`: crops stay for
/// Train, a seed-initialized encoder embeds them for Frozen, and RSNF files
/// named <chip_id>.rsnf under features_dir are attached for External.
std::vector<graph::ChipGraph> load_corpus(const std::filesystem::path& cache_dir, EncoderMode mode,
                                          const models::ModelConfig& model, std::uint64_t seed,
                                          const std::filesystem::path& features_dir = {},
                                          std::span<const std::string> disasters = {});

/// In-place feature preparation for Frozen mode; a no-op for graphs that
/// already carry embeddings.
void embed_frozen(std::span<graph::ChipGraph> graphs, const models::ModelConfig& model, std::uint64_t seed);

}  // namespace ruinscope::experiments
