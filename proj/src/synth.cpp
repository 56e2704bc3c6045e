#include "ruinscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ruinscope/binary_io.hpp"
#include "ruinscope/error.hpp"
#include "ruinscope/geo.hpp"
#include "ruinscope/rng.hpp"

namespace ruinscope::synth {
namespace {

struct Rect {
  int x0, y0, x1, y1;  // half-open
  geo::Point2 center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
};

float quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(static_cast<std::uint8_t>(std::lround(static_cast<float>(c) * 255.0f))) / 255.0f;
}

std::uint64_t name_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

std::vector<Rect> place_buildings(const SynthConfig& cfg, Rng& rng, std::size_t count) {
  std::vector<Rect> out;
  const int gap = 2;
  for (std::size_t attempt = 0; out.size() < count && attempt < count * 400; ++attempt) {
    const int w = cfg.min_side + static_cast<int>(rng.index(static_cast<std::uint64_t>(cfg.max_side - cfg.min_side + 1)));
    const int h = cfg.min_side + static_cast<int>(rng.index(static_cast<std::uint64_t>(cfg.max_side - cfg.min_side + 1)));
    const int x0 = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(cfg.chip_size - w - 1)));
    const int y0 = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(cfg.chip_size - h - 1)));
    const Rect r{x0, y0, x0 + w, y0 + h};
    const bool clash = std::any_of(out.begin(), out.end(), [&](const Rect& o) {
      return r.x0 < o.x1 + gap && o.x0 < r.x1 + gap && r.y0 < o.y1 + gap && o.y0 < r.y1 + gap;
    });
    if (!clash) out.push_back(r);
  }
  return out;
}

std::string damage_string(int cls, Rng& rng) {
  switch (cls) {
    case 0: return "no-damage";
    case 1: return "minor-damage";
    default: return rng.uniform() < 0.5 ? "major-damage" : "destroyed";
  }
}

}  // namespace

std::vector<SynthDisaster> builtin_disasters() {
  return {{"socal-fire", "fire"},
          {"portugal-fire", "fire"},
          {"nepal-flooding", "flooding"},
          {"joplin-tornado", "tornado"},
          {"puna-volcano", "volcano"}};
}

void validate(const SynthConfig& c) {
  auto fail = [](const std::string& what) { throw Error(Errc::ConfigError, "synth: " + what); };
  if (c.chips == 0) fail("chips must be positive");
  if (c.min_buildings < 2 || c.max_buildings < c.min_buildings) fail("building range must satisfy 2 <= min <= max");
  if (c.min_side < 4 || c.max_side < c.min_side) fail("side range must satisfy 4 <= min <= max");
  if (c.chip_size < 4 * c.max_side) fail("chip_size must be at least 4 * max_side");
  if (!(c.correlation_length > 0.0)) fail("correlation_length must be positive");
  if (c.fourier_features == 0) fail("fourier_features must be positive");
  if (!(c.low_threshold <= c.high_threshold)) fail("low_threshold must not exceed high_threshold");
  if (!(c.mixing_noise >= 0.0 && c.mixing_noise <= 1.0)) fail("mixing_noise must lie in [0, 1]");
  if (!(c.unclassified_fraction >= 0.0 && c.unclassified_fraction < 1.0)) fail("unclassified_fraction must lie in [0, 1)");
  if (!std::isfinite(c.damage_step) || !std::isfinite(c.coupling) || !(c.pixel_noise >= 0.0)) {
    fail("damage_step, coupling and pixel_noise must be finite");
  }
  if (c.disasters.empty()) fail("at least one disaster is required");
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json disasters = nlohmann::json::array();
  for (const auto& d : c.disasters) disasters.push_back({{"id", d.id}, {"type", d.type}});
  return {{"chips", c.chips},
          {"min_buildings", c.min_buildings},
          {"max_buildings", c.max_buildings},
          {"chip_size", c.chip_size},
          {"min_side", c.min_side},
          {"max_side", c.max_side},
          {"correlation_length", c.correlation_length},
          {"fourier_features", c.fourier_features},
          {"low_threshold", c.low_threshold},
          {"high_threshold", c.high_threshold},
          {"mixing_noise", c.mixing_noise},
          {"unclassified_fraction", c.unclassified_fraction},
          {"damage_step", c.damage_step},
          {"coupling", c.coupling},
          {"pixel_noise", c.pixel_noise},
          {"disasters", disasters}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::ConfigError, "synth config must be a JSON object");
  SynthConfig c;
  const nlohmann::json defaults = to_json(c);
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw Error(Errc::ConfigError, "synth: unknown key '" + key + "'");
  }
  try {
    c.chips = j.value("chips", c.chips);
    c.min_buildings = j.value("min_buildings", c.min_buildings);
    c.max_buildings = j.value("max_buildings", c.max_buildings);
    c.chip_size = j.value("chip_size", c.chip_size);
    c.min_side = j.value("min_side", c.min_side);
    c.max_side = j.value("max_side", c.max_side);
    c.correlation_length = j.value("correlation_length", c.correlation_length);
    c.fourier_features = j.value("fourier_features", c.fourier_features);
    c.low_threshold = j.value("low_threshold", c.low_threshold);
    c.high_threshold = j.value("high_threshold", c.high_threshold);
    c.mixing_noise = j.value("mixing_noise", c.mixing_noise);
    c.unclassified_fraction = j.value("unclassified_fraction", c.unclassified_fraction);
    c.damage_step = j.value("damage_step", c.damage_step);
    c.coupling = j.value("coupling", c.coupling);
    c.pixel_noise = j.value("pixel_noise", c.pixel_noise);
    if (j.contains("disasters")) {
      c.disasters.clear();
      for (const auto& d : j.at("disasters")) c.disasters.push_back({d.at("id").get<std::string>(), d.at("type").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("synth: ") + e.what());
  }
  validate(c);
  return c;
}

SynthChip generate_chip(const SynthConfig& cfg, std::uint64_t seed, std::size_t index) {
  validate(cfg);
  const SynthDisaster& disaster = cfg.disasters[index % cfg.disasters.size()];
  Rng rng(mix_seed(seed, index));
  Rng look(mix_seed(name_hash(disaster.id), 17));

  const int size = cfg.chip_size;
  const std::size_t want =
      cfg.min_buildings + static_cast<std::size_t>(rng.index(cfg.max_buildings - cfg.min_buildings + 1));
  const std::vector<Rect> rects = place_buildings(cfg, rng, want);
  const std::size_t n = rects.size();

  // Random Fourier features approximate a Gaussian-kernel field with unit variance.
  const std::size_t m = cfg.fourier_features;
  std::vector<double> wx(m), wy(m), phase(m);
  for (std::size_t k = 0; k < m; ++k) {
    wx[k] = rng.normal() / cfg.correlation_length;
    wy[k] = rng.normal() / cfg.correlation_length;
    phase[k] = rng.uniform(0.0, 2.0 * M_PI);
  }
  std::vector<geo::Point2> centers(n);
  std::vector<int> field_class(n);
  for (std::size_t i = 0; i < n; ++i) {
    centers[i] = rects[i].center();
    double f = 0.0;
    for (std::size_t k = 0; k < m; ++k) f += std::cos(wx[k] * centers[i].x + wy[k] * centers[i].y + phase[k]);
    f *= std::sqrt(2.0 / static_cast<double>(m));
    field_class[i] = f < cfg.low_threshold ? 0 : (f > cfg.high_threshold ? 2 : 1);
  }
  std::vector<int> label = field_class;
  std::vector<bool> unclassified(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < cfg.mixing_noise) label[i] = static_cast<int>(rng.index(3));
    unclassified[i] = rng.uniform() < cfg.unclassified_fraction;
  }

  // Per-building perturbation: own class step plus coupling to Delaunay neighbors.
  std::vector<double> shift(n);
  {
    std::vector<std::vector<std::size_t>> nbrs(n);
    if (n >= 2) {
      for (const auto& [a, b] : geo::delaunay(centers).edges) {
        nbrs[a].push_back(b);
        nbrs[b].push_back(a);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double mean = 0.0;
      for (std::size_t j : nbrs[i]) mean += label[j];
      if (!nbrs[i].empty()) mean /= static_cast<double>(nbrs[i].size());
      shift[i] = cfg.damage_step * (label[i] + cfg.coupling * mean);
    }
  }

  const double tint[3] = {look.uniform(0.30, 0.45), look.uniform(0.30, 0.45), look.uniform(0.25, 0.40)};
  const double direction[3] = {0.9, 0.55, -0.35};
  Image pre(3, size, size);
  Image post(3, size, size);
  const double grain = look.uniform(0.02, 0.05);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double base = tint[c] + grain * std::sin(0.11 * x + 0.7 * c) * std::cos(0.07 * y);
        pre.at(c, y, x) = static_cast<float>(base + 0.02 * rng.normal());
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Rect& r = rects[i];
    double roof[3];
    for (double& v : roof) v = rng.uniform(0.35, 0.55);
    for (int c = 0; c < 3; ++c) {
      for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) pre.at(c, y, x) = static_cast<float>(roof[c] + 0.03 * rng.normal());
      }
    }
  }
  post = pre;
  for (std::size_t i = 0; i < n; ++i) {
    const Rect& r = rects[i];
    for (int c = 0; c < 3; ++c) {
      for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) post.at(c, y, x) += static_cast<float>(direction[c] * shift[i]);
      }
    }
  }
  for (std::size_t k = 0; k < pre.data.size(); ++k) {
    pre.data[k] = quantize(pre.data[k]);
    post.data[k] = quantize(post.data[k] + cfg.pixel_noise * rng.normal());
  }

  SynthChip out;
  auto& rec = out.record;
  char id[96];
  std::snprintf(id, sizeof id, "%s_%05zu", disaster.id.c_str(), index);
  rec.chip_id = id;
  rec.disaster_id = disaster.id;
  rec.disaster_type = disaster.type;
  rec.pre_image = std::move(pre);
  rec.post_image = std::move(post);
  for (std::size_t i = 0; i < n; ++i) {
    const Rect& r = rects[i];
    ingest::RawBuilding b;
    b.uid = rec.chip_id + "-b" + std::to_string(i);
    b.polygon = {{double(r.x0), double(r.y0)}, {double(r.x1), double(r.y0)}, {double(r.x1), double(r.y1)},
                 {double(r.x0), double(r.y1)}};
    b.damage = unclassified[i] ? "un-classified" : damage_string(label[i], rng);
    rec.buildings.push_back(std::move(b));
  }
  out.field_class = std::move(field_class);
  return out;
}

std::vector<SynthChip> generate(const SynthConfig& config, std::uint64_t seed) {
  std::vector<SynthChip> out;
  out.reserve(config.chips);
  for (std::size_t i = 0; i < config.chips; ++i) out.push_back(generate_chip(config, seed, i));
  return out;
}

std::string label_json(const ingest::ChipRecord& rec) {
  nlohmann::json buildings = nlohmann::json::array();
  for (const auto& b : rec.buildings) {
    std::string wkt = "POLYGON ((";
    for (std::size_t k = 0; k <= b.polygon.size(); ++k) {
      const auto& p = b.polygon[k % b.polygon.size()];
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s%.17g %.17g", k ? ", " : "", p.x, p.y);
      wkt += buf;
    }
    wkt += "))";
    buildings.push_back({{"uid", b.uid}, {"wkt", wkt}, {"damage", b.damage}});
  }
  return nlohmann::json{{"chip_id", rec.chip_id},
                        {"disaster_id", rec.disaster_id},
                        {"disaster_type", rec.disaster_type},
                        {"buildings", buildings}}
             .dump(1);
}

std::vector<ingest::ManifestRow> write_corpus(const SynthConfig& config, std::uint64_t seed,
                                              const std::filesystem::path& out_dir) {
  validate(config);
  std::filesystem::create_directories(out_dir / "labels");
  std::filesystem::create_directories(out_dir / "images");
  std::vector<ingest::ManifestRow> rows;
  for (std::size_t i = 0; i < config.chips; ++i) {
    const SynthChip chip = generate_chip(config, seed, i);
    const auto& rec = chip.record;
    ingest::ManifestRow row{rec.chip_id,
                            rec.disaster_id,
                            rec.disaster_type,
                            std::filesystem::path("labels") / (rec.chip_id + ".json"),
                            std::filesystem::path("images") / (rec.chip_id + "_pre.png"),
                            std::filesystem::path("images") / (rec.chip_id + "_post.png")};
    io::write_text_atomic(out_dir / row.label_path, label_json(rec));
    io::write_file_atomic(out_dir / row.pre_path, encode_png(rec.pre_image));
    io::write_file_atomic(out_dir / row.post_path, encode_png(rec.post_image));
    rows.push_back(std::move(row));
  }
  io::write_text_atomic(out_dir / "manifest.csv", ingest::format_manifest(rows));
  return rows;
}

std::optional<double> same_class_edge_fraction(std::span<const geo::Point2> centroids, std::span<const int> classes) {
  if (centroids.size() != classes.size()) throw Error(Errc::LengthMismatch, "centroids and classes differ in length");
  if (centroids.size() < 2) return std::nullopt;
  const auto edges = geo::delaunay(centroids).edges;
  if (edges.empty()) return std::nullopt;
  std::size_t same = 0;
  for (const auto& [a, b] : edges) same += classes[a] == classes[b];
  return static_cast<double>(same) / static_cast<double>(edges.size());
}

}  // namespace ruinscope::synth
