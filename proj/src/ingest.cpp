#include "ruinscope/ingest.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "ruinscope/binary_io.hpp"
#include "ruinscope/error.hpp"

namespace ruinscope::ingest {
namespace {

using nlohmann::json;

std::string required_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(Errc::ParseError, std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw Error(Errc::ParseError, "unknown field '" + it.key() + "' in " + std::string(where));
    }
  }
}

LabelFile parse_xbd(const json& doc) {
  LabelFile out;
  const json& meta = doc.value("metadata", json::object());
  out.disaster_id = meta.value("disaster", "");
  out.disaster_type = meta.value("disaster_type", "");
  std::string img = meta.value("img_name", "");
  for (std::string_view suffix : {"_post_disaster.png", "_pre_disaster.png", ".png"}) {
    if (img.size() > suffix.size() && img.ends_with(suffix)) {
      img.resize(img.size() - suffix.size());
      break;
    }
  }
  out.chip_id = img;
  const json& features = doc.at("features");
  if (!features.contains("xy")) throw Error(Errc::ParseError, "xBD label lacks features.xy");
  std::size_t k = 0;
  for (const json& f : features.at("xy")) {
    RawBuilding b;
    const json& props = f.value("properties", json::object());
    b.uid = props.value("uid", "b" + std::to_string(k));
    b.damage = props.value("subtype", "un-classified");
    b.polygon = parse_wkt_polygon(required_string(f, "wkt"));
    out.buildings.push_back(std::move(b));
    ++k;
  }
  return out;
}

double parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr == s.data()) throw Error(Errc::ParseError, "bad number in WKT: " + std::string(s));
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// a + t (b - a), clamped into [min(a,b), max(a,b)].
inline float lerp(float a, float b, float t) {
  const float v = a + t * (b - a);
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

}  // namespace

std::vector<geo::Point2> parse_wkt_polygon(std::string_view wkt) {
  const auto open = wkt.find("((");
  if (!wkt.starts_with("POLYGON") || open == std::string_view::npos) {
    throw Error(Errc::ParseError, "expected 'POLYGON ((...))' WKT");
  }
  const auto close = wkt.find(')', open);
  if (close == std::string_view::npos) throw Error(Errc::ParseError, "unterminated WKT ring");
  std::string_view ring = wkt.substr(open + 2, close - open - 2);
  std::vector<geo::Point2> pts;
  while (!ring.empty()) {
    const auto comma = ring.find(',');
    std::string_view pair = ring.substr(0, comma);
    while (!pair.empty() && pair.front() == ' ') pair.remove_prefix(1);
    while (!pair.empty() && pair.back() == ' ') pair.remove_suffix(1);
    const auto space = pair.find(' ');
    if (space == std::string_view::npos) throw Error(Errc::ParseError, "bad WKT vertex");
    pts.push_back({parse_double(pair.substr(0, space)), parse_double(pair.substr(space + 1))});
    if (comma == std::string_view::npos) break;
    ring.remove_prefix(comma + 1);
  }
  // Closed rings repeat the first vertex.
  if (pts.size() > 1 && pts.front() == pts.back()) pts.pop_back();
  return pts;
}

LabelFile parse_labels(std::string_view label_json) {
  json doc;
  try {
    doc = json::parse(label_json);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, e.what());
  }
  if (!doc.is_object()) throw Error(Errc::ParseError, "label file must be a JSON object");
  try {
    if (doc.contains("features")) return parse_xbd(doc);

    reject_unknown(doc, {"chip_id", "disaster_id", "disaster_type", "buildings"}, "label file");
    LabelFile out;
    out.chip_id = required_string(doc, "chip_id");
    out.disaster_id = required_string(doc, "disaster_id");
    out.disaster_type = required_string(doc, "disaster_type");
    const auto it = doc.find("buildings");
    if (it == doc.end() || !it->is_array()) throw Error(Errc::ParseError, "missing array 'buildings'");
    for (const json& b : *it) {
      if (!b.is_object()) throw Error(Errc::ParseError, "building entry must be an object");
      reject_unknown(b, {"uid", "wkt", "damage"}, "building");
      out.buildings.push_back(
          {required_string(b, "uid"), parse_wkt_polygon(required_string(b, "wkt")), required_string(b, "damage")});
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

ChipRecord parse_chip(std::string_view label_json, std::span<const std::uint8_t> pre_png,
                      std::span<const std::uint8_t> post_png) {
  LabelFile labels = parse_labels(label_json);
  ChipRecord rec;
  rec.chip_id = std::move(labels.chip_id);
  rec.disaster_id = std::move(labels.disaster_id);
  rec.disaster_type = std::move(labels.disaster_type);
  rec.buildings = std::move(labels.buildings);
  rec.pre_image = decode_png(pre_png);
  rec.post_image = decode_png(post_png);
  if (rec.pre_image.height != rec.post_image.height || rec.pre_image.width != rec.post_image.width) {
    throw Error(Errc::ImageMismatch, "pre " + std::to_string(rec.pre_image.width) + "x" +
                                         std::to_string(rec.pre_image.height) + " vs post " +
                                         std::to_string(rec.post_image.width) + "x" +
                                         std::to_string(rec.post_image.height));
  }
  return rec;
}

Image resize_bilinear(const Image& image, int out_height, int out_width) {
  if (image.height == out_height && image.width == out_width) return image;
  Image out(image.channels, out_height, out_width);
  const double sy = out_height > 1 ? static_cast<double>(image.height - 1) / (out_height - 1) : 0.0;
  const double sx = out_width > 1 ? static_cast<double>(image.width - 1) / (out_width - 1) : 0.0;
  std::vector<int> x0(out_width), x1(out_width);
  std::vector<float> fx(out_width);
  for (int x = 0; x < out_width; ++x) {
    const double src = x * sx;
    x0[x] = std::min(static_cast<int>(std::floor(src)), image.width - 1);
    x1[x] = std::min(x0[x] + 1, image.width - 1);
    fx[x] = static_cast<float>(src - x0[x]);
  }
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < out_height; ++y) {
      const double src = y * sy;
      const int y0 = std::min(static_cast<int>(std::floor(src)), image.height - 1);
      const int y1 = std::min(y0 + 1, image.height - 1);
      const float fy = static_cast<float>(src - y0);
      for (int x = 0; x < out_width; ++x) {
        const float top = lerp(image.at(c, y0, x0[x]), image.at(c, y0, x1[x]), fx[x]);
        const float bottom = lerp(image.at(c, y1, x0[x]), image.at(c, y1, x1[x]), fx[x]);
        out.at(c, y, x) = lerp(top, bottom, fy);
      }
    }
  }
  return out;
}

Image crop_resize(const Image& image, const geo::Envelope& envelope, int size) {
  const int x0 = static_cast<int>(std::floor(envelope.min_x));
  const int y0 = static_cast<int>(std::floor(envelope.min_y));
  const int x1 = std::max(static_cast<int>(std::ceil(envelope.max_x)), x0 + 1);
  const int y1 = std::max(static_cast<int>(std::ceil(envelope.max_y)), y0 + 1);
  const int cx0 = std::max(x0, 0), cy0 = std::max(y0, 0);
  const int cx1 = std::min(x1, image.width), cy1 = std::min(y1, image.height);
  if (cx1 <= cx0 || cy1 <= cy0) throw Error(Errc::EmptyIntersection, "envelope does not overlap the image");

  Image crop(image.channels, y1 - y0, x1 - x0);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < crop.height; ++y) {
      const int sy = std::clamp(y0 + y, cy0, cy1 - 1);
      for (int x = 0; x < crop.width; ++x) {
        crop.at(c, y, x) = image.at(c, sy, std::clamp(x0 + x, cx0, cx1 - 1));
      }
    }
  }
  return resize_bilinear(crop, size, size);
}

std::string_view class_name(DamageClass c) {
  switch (c) {
    case DamageClass::NoDamage: return "no_damage";
    case DamageClass::MinorDamage: return "minor_damage";
    case DamageClass::MajorOrDestroyed: return "major_or_destroyed";
    case DamageClass::Unclassified: break;
  }
  return "unclassified";
}

DamageClass merge_classes(std::string_view raw_label) {
  if (raw_label == "no-damage") return DamageClass::NoDamage;
  if (raw_label == "minor-damage") return DamageClass::MinorDamage;
  if (raw_label == "major-damage" || raw_label == "destroyed") return DamageClass::MajorOrDestroyed;
  if (raw_label == "un-classified") return DamageClass::Unclassified;
  throw Error(Errc::UnknownLabel, "unknown damage label '" + std::string(raw_label) + "'");
}

std::string_view filter_reason_name(FilterReason reason) {
  switch (reason) {
    case FilterReason::Kept: return "kept";
    case FilterReason::NoBuildings: return "no_buildings";
    case FilterReason::OnlyOneBuilding: return "only_one_building";
    case FilterReason::NoLabeledBuildings: return "no_labeled_buildings";
    case FilterReason::OnlyOneLabeledBuilding: return "only_one_labeled_building";
  }
  return "unknown";
}

FilterDecision filter_chip(std::span<const DamageClass> labels) {
  if (labels.empty()) return {false, FilterReason::NoBuildings};
  if (labels.size() == 1) return {false, FilterReason::OnlyOneBuilding};
  const auto labeled = std::count_if(labels.begin(), labels.end(), is_labeled);
  if (labeled == 0) return {false, FilterReason::NoLabeledBuildings};
  if (labeled == 1) return {false, FilterReason::OnlyOneLabeledBuilding};
  return {true, FilterReason::Kept};
}

FilterDecision filter_chip(const ChipRecord& record) {
  std::vector<DamageClass> labels;
  labels.reserve(record.buildings.size());
  for (const auto& b : record.buildings) labels.push_back(merge_classes(b.damage));
  return filter_chip(labels);
}

std::vector<BuildingNode> extract_nodes(const ChipRecord& record) {
  std::vector<BuildingNode> nodes;
  nodes.reserve(record.buildings.size());
  std::set<std::pair<double, double>> seen;
  for (const auto& b : record.buildings) {
    BuildingNode node;
    node.id = b.uid;
    node.envelope = geo::envelope_of(b.polygon);
    node.centroid = geo::centroid(node.envelope);
    // Coincident centroids would be rejected by the triangulation.
    while (!seen.insert({node.centroid.x, node.centroid.y}).second) node.centroid.x += 1e-6;
    node.pre_crop = crop_resize(record.pre_image, node.envelope);
    node.post_crop = crop_resize(record.post_image, node.envelope);
    node.label = merge_classes(b.damage);
    nodes.push_back(std::move(node));
  }
  return nodes;
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& csv_path) {
  std::istringstream in(io::read_text(csv_path));
  const auto base = csv_path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::ParseError, "empty manifest " + csv_path.string());
  const std::vector<std::string> expected{"chip_id", "disaster_id", "disaster_type",
                                          "label_path", "pre_path", "post_path"};
  if (split_csv_line(line) != expected) throw Error(Errc::ParseError, "manifest header mismatch");
  std::vector<ManifestRow> rows;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 6) {
      throw Error(Errc::ParseError, "manifest line " + std::to_string(lineno) + " has " +
                                        std::to_string(cells.size()) + " columns");
    }
    rows.push_back({cells[0], cells[1], cells[2], resolve(cells[3]), resolve(cells[4]), resolve(cells[5])});
  }
  return rows;
}

std::string format_manifest(std::span<const ManifestRow> rows) {
  std::string out = "chip_id,disaster_id,disaster_type,label_path,pre_path,post_path\n";
  for (const auto& r : rows) {
    out += r.chip_id + "," + r.disaster_id + "," + r.disaster_type + "," + r.label_path.generic_string() + "," +
           r.pre_path.generic_string() + "," + r.post_path.generic_string() + "\n";
  }
  return out;
}

ChipRecord load_chip(const ManifestRow& row) {
  const std::string label = io::read_text(row.label_path);
  const auto pre = io::read_file(row.pre_path);
  const auto post = io::read_file(row.post_path);
  ChipRecord rec;
  try {
    rec = parse_chip(label, pre, post);
  } catch (const Error& e) {
    throw Error(e.code(), row.chip_id + ": " + e.what());
  }
  // The manifest is authoritative for identity when the label omits it.
  if (rec.chip_id.empty()) rec.chip_id = row.chip_id;
  if (rec.disaster_id.empty()) rec.disaster_id = row.disaster_id;
  if (rec.disaster_type.empty()) rec.disaster_type = row.disaster_type;
  return rec;
}

std::vector<ManifestRow> xbd_manifest(const std::filesystem::path& root, std::optional<std::size_t> limit) {
  namespace fs = std::filesystem;
  const fs::path labels = root / "labels";
  const fs::path images = root / "images";
  if (!fs::is_directory(labels) || !fs::is_directory(images)) {
    throw Error(Errc::Io, "expected labels/ and images/ under " + root.string());
  }
  std::vector<ManifestRow> rows;
  const std::string suffix = "_post_disaster.json";
  for (const auto& entry : fs::directory_iterator(labels)) {
    const std::string name = entry.path().filename().string();
    if (!name.ends_with(suffix)) continue;
    const std::string chip = name.substr(0, name.size() - suffix.size());
    const auto dash = chip.rfind('_');
    const std::string disaster = dash == std::string::npos ? chip : chip.substr(0, dash);
    rows.push_back({chip, disaster, "", entry.path(), images / (chip + "_pre_disaster.png"),
                    images / (chip + "_post_disaster.png")});
  }
  std::sort(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.chip_id < b.chip_id; });
  if (limit && rows.size() > *limit) rows.resize(*limit);
  return rows;
}

}  // namespace ruinscope::ingest
