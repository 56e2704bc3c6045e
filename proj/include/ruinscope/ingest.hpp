#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ruinscope/geo.hpp"
#include "ruinscope/image.hpp"

namespace ruinscope::ingest {

/// Damage labels after merging "major-damage" and "destroyed".
enum class DamageClass : std::int8_t {
  NoDamage = 0,
  MinorDamage = 1,
  MajorOrDestroyed = 2,
  Unclassified = -1,
};

inline constexpr int kNumClasses = 3;
inline constexpr int kCropSize = 128;

inline bool is_labeled(DamageClass c) { return c != DamageClass::Unclassified; }

/// "no_damage", "minor_damage", "major_or_destroyed", "unclassified".
std::string_view class_name(DamageClass c);

struct RawBuilding {
  std::string uid;
  std::vector<geo::Point2> polygon;
  std::string damage;
};

struct ChipRecord {
  std::string chip_id;
  std::string disaster_id;
  std::string disaster_type;
  Image pre_image;
  Image post_image;
  std::vector<RawBuilding> buildings;
};

struct BuildingNode {
  std::string id;
  geo::Envelope envelope;
  geo::Point2 centroid;
  Image pre_crop;   // 3 x 128 x 128
  Image post_crop;  // 3 x 128 x 128
  DamageClass label = DamageClass::Unclassified;
};

/// Parsed label file without images.
struct LabelFile {
  std::string chip_id;
  std::string disaster_id;
  std::string disaster_type;
  std::vector<RawBuilding> buildings;
};

/// Accepts the native label schema, or an xBD post-disaster label file
/// (detected by its top-level "features" object).
LabelFile parse_labels(std::string_view label_json);

std::vector<geo::Point2> parse_wkt_polygon(std::string_view wkt);

ChipRecord parse_chip(std::string_view label_json, std::span<const std::uint8_t> pre_png,
                      std::span<const std::uint8_t> post_png);

/// Bilinear resize with the align-corners mapping.
Image resize_bilinear(const Image& image, int out_height, int out_width);

/// Crops the envelope (clipped to the image, edge-replicated back to the
/// envelope's full extent) and resizes it to size x size.
Image crop_resize(const Image& image, const geo::Envelope& envelope, int size = kCropSize);

DamageClass merge_classes(std::string_view raw_label);

enum class FilterReason {
  Kept,
  NoBuildings,
  OnlyOneBuilding,
  NoLabeledBuildings,
  OnlyOneLabeledBuilding,
};

std::string_view filter_reason_name(FilterReason reason);

struct FilterDecision {
  bool keep = false;
  FilterReason reason = FilterReason::Kept;
};

FilterDecision filter_chip(std::span<const DamageClass> labels);
FilterDecision filter_chip(const ChipRecord& record);

/// Envelopes, centroids, crops, and merged labels for every building.
/// Coincident centroids are separated by 1e-6 px steps along x.
std::vector<BuildingNode> extract_nodes(const ChipRecord& record);

struct ManifestRow {
  std::string chip_id;
  std::string disaster_id;
  std::string disaster_type;
  std::filesystem::path label_path;
  std::filesystem::path pre_path;
  std::filesystem::path post_path;
};

/// Header: chip_id,disaster_id,disaster_type,label_path,pre_path,post_path.
/// Relative paths resolve against the manifest's directory.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& csv_path);
std::string format_manifest(std::span<const ManifestRow> rows);

ChipRecord load_chip(const ManifestRow& row);

/// Builds manifest rows for an xBD-layout directory (images/, labels/),
/// sorted by chip id, optionally truncated to the first `limit` chips.
std::vector<ManifestRow> xbd_manifest(const std::filesystem::path& root, std::optional<std::size_t> limit);

}  // namespace ruinscope::ingest
