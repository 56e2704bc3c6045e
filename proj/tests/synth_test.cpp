#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ruinscope/binary_io.hpp"
#include "ruinscope/error.hpp"
#include "ruinscope/geo.hpp"
#include "ruinscope/synth.hpp"
#include "support.hpp"

namespace {

using namespace ruinscope;
using synth::SynthConfig;

std::vector<geo::Point2> centers_of(const ingest::ChipRecord& rec) {
  std::vector<geo::Point2> out;
  for (const auto& b : rec.buildings) {
    out.push_back({(b.polygon[0].x + b.polygon[2].x) / 2, (b.polygon[0].y + b.polygon[2].y) / 2});
  }
  return out;
}

double mean_join_fraction(double ell, int seeds) {
  SynthConfig cfg;
  cfg.correlation_length = ell;
  double sum = 0;
  int count = 0;
  for (int s = 0; s < seeds; ++s) {
    for (std::size_t i = 0; i < 3; ++i) {
      const auto chip = synth::generate_chip(cfg, static_cast<std::uint64_t>(s), i);
      const auto f = synth::same_class_edge_fraction(centers_of(chip.record), chip.field_class);
      if (f) {
        sum += *f;
        ++count;
      }
    }
  }
  return sum / count;
}

TEST(Synth, DeterministicPerIndex) {
  SynthConfig cfg;
  const auto a = synth::generate_chip(cfg, 3, 4);
  const auto b = synth::generate_chip(cfg, 3, 4);
  EXPECT_EQ(synth::label_json(a.record), synth::label_json(b.record));
  EXPECT_EQ(a.record.pre_image.data, b.record.pre_image.data);
  EXPECT_EQ(a.record.post_image.data, b.record.post_image.data);
  const auto c = synth::generate_chip(cfg, 4, 4);
  EXPECT_NE(a.record.post_image.data, c.record.post_image.data);
  // the whole-corpus generator agrees with chip-at-a-time generation
  cfg.chips = 6;
  EXPECT_EQ(synth::label_json(synth::generate(cfg, 3)[4].record), synth::label_json(a.record));
}

TEST(Synth, ChipsAreWellFormed) {
  SynthConfig cfg;
  cfg.unclassified_fraction = 0.2;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto chip = synth::generate_chip(cfg, 1, i);
    const auto& rec = chip.record;
    EXPECT_EQ(rec.disaster_id, cfg.disasters[i % cfg.disasters.size()].id);
    EXPECT_GE(rec.buildings.size(), 2u);
    EXPECT_LE(rec.buildings.size(), cfg.max_buildings);
    EXPECT_EQ(rec.pre_image.height, cfg.chip_size);
    for (float v : rec.post_image.data) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
      ASSERT_NEAR(std::round(v * 255.0f), v * 255.0f, 1e-3);
    }
    // rectangles stay inside and do not overlap
    for (std::size_t a = 0; a < rec.buildings.size(); ++a) {
      const auto& p = rec.buildings[a].polygon;
      EXPECT_GE(p[0].x, 0);
      EXPECT_LE(p[2].x, cfg.chip_size);
      for (std::size_t b = a + 1; b < rec.buildings.size(); ++b) {
        const auto& q = rec.buildings[b].polygon;
        const bool apart = p[2].x <= q[0].x || q[2].x <= p[0].x || p[2].y <= q[0].y || q[2].y <= p[0].y;
        EXPECT_TRUE(apart);
      }
    }
    // labels survive the text round trip
    const auto parsed = ingest::parse_labels(synth::label_json(rec));
    ASSERT_EQ(parsed.buildings.size(), rec.buildings.size());
    for (std::size_t k = 0; k < rec.buildings.size(); ++k) {
      EXPECT_EQ(parsed.buildings[k].damage, rec.buildings[k].damage);
      for (std::size_t v = 0; v < 4; ++v) EXPECT_EQ(parsed.buildings[k].polygon[v].x, rec.buildings[k].polygon[v].x);
    }
  }
}

TEST(Synth, PostShiftFollowsOwnAndNeighborLabels) {
  SynthConfig cfg;
  cfg.pixel_noise = 0.0;
  cfg.damage_step = 0.05;
  cfg.coupling = 1.0;
  for (std::size_t idx = 0; idx < 4; ++idx) {
    const auto chip = synth::generate_chip(cfg, 8, idx);
    const auto& rec = chip.record;
    const auto centers = centers_of(rec);
    std::vector<int> label;
    for (const auto& b : rec.buildings) label.push_back(static_cast<int>(ingest::merge_classes(b.damage)));
    std::vector<std::vector<std::size_t>> nbrs(centers.size());
    for (const auto& [a, b] : geo::delaunay(centers).edges) {
      nbrs[a].push_back(b);
      nbrs[b].push_back(a);
    }
    for (std::size_t i = 0; i < centers.size(); ++i) {
      double mean = 0;
      for (std::size_t j : nbrs[i]) mean += label[j];
      mean /= static_cast<double>(nbrs[i].size());
      const double shift = cfg.damage_step * (label[i] + cfg.coupling * mean);
      const auto& p = rec.buildings[i].polygon;
      double diff = 0;
      int count = 0;
      for (int y = static_cast<int>(p[0].y); y < static_cast<int>(p[2].y); ++y) {
        for (int x = static_cast<int>(p[0].x); x < static_cast<int>(p[2].x); ++x) {
          diff += rec.post_image.at(0, y, x) - rec.pre_image.at(0, y, x);
          ++count;
        }
      }
      EXPECT_NEAR(diff / count, 0.9 * shift, 1.0 / 255.0) << "chip " << idx << " building " << i;
    }
  }
}

TEST(Synth, JoinCountGrowsWithCorrelationLength) {
  const double short_range = mean_join_fraction(4.0, 20);
  const double mid_range = mean_join_fraction(32.0, 20);
  const double long_range = mean_join_fraction(256.0, 20);
  EXPECT_LT(short_range, mid_range);
  EXPECT_LT(mid_range, long_range);
  // i.i.d. labels with these thresholds give roughly 0.33-0.4
  EXPECT_LT(short_range, 0.5);
  EXPECT_GT(long_range, 0.75);
}

TEST(Synth, InfiniteCorrelationGivesOneClassPerChip) {
  SynthConfig cfg;
  cfg.correlation_length = 1e9;
  for (std::size_t i = 0; i < 8; ++i) {
    const auto chip = synth::generate_chip(cfg, 2, i);
    const std::set<int> classes(chip.field_class.begin(), chip.field_class.end());
    EXPECT_EQ(classes.size(), 1u);
  }
}

TEST(Synth, MixingNoiseOnlyChangesLabels) {
  SynthConfig cfg;
  cfg.mixing_noise = 1.0;
  const auto chip = synth::generate_chip(cfg, 5, 0);
  SynthConfig clean;
  const auto ref = synth::generate_chip(clean, 5, 0);
  EXPECT_EQ(chip.field_class, ref.field_class);
}

TEST(Synth, JoinFraction) {
  const std::vector<geo::Point2> pts{{0, 0}, {1, 0}, {0, 1}};
  EXPECT_DOUBLE_EQ(*synth::same_class_edge_fraction(pts, std::vector<int>{1, 1, 2}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(*synth::same_class_edge_fraction(pts, std::vector<int>{0, 0, 0}), 1.0);
}

TEST(Synth, ConfigValidation) {
  SynthConfig cfg;
  const auto j = synth::to_json(cfg);
  EXPECT_EQ(synth::to_json(synth::synth_config_from_json(j)), j);
  auto bad = j;
  bad["bogus"] = 1;
  EXPECT_THROW(synth::synth_config_from_json(bad), Error);
  for (auto [key, value] : std::vector<std::pair<std::string, nlohmann::json>>{
           {"chips", 0}, {"min_buildings", 1}, {"correlation_length", 0.0}, {"mixing_noise", 1.5}, {"max_side", 200}}) {
    auto k = j;
    k[key] = value;
    try {
      synth::synth_config_from_json(k);
      ADD_FAILURE() << key;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::ConfigError) << key;
    }
  }
}

TEST(Synth, CorpusOnDiskLoadsBack) {
  SynthConfig cfg;
  cfg.chips = 3;
  const auto dir = testing_support::temp_dir("synth_corpus");
  const auto rows = synth::write_corpus(cfg, 9, dir);
  const auto read = ingest::read_manifest(dir / "manifest.csv");
  ASSERT_EQ(read.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto rec = ingest::load_chip(read[i]);
    const auto ref = synth::generate_chip(cfg, 9, i).record;
    EXPECT_EQ(rec.chip_id, ref.chip_id);
    EXPECT_EQ(rec.post_image.data, ref.post_image.data);
    EXPECT_EQ(rec.buildings.size(), ref.buildings.size());
  }
}

}  // namespace
