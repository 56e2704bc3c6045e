#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ruinscope/geo.hpp"
#include "ruinscope/graph.hpp"
#include "ruinscope/ingest.hpp"
#include "ruinscope/rng.hpp"

namespace testing_support {

using ruinscope::Rng;
using ruinscope::geo::Point2;

/// Points with pairwise distance >= min_gap in [0, scale)^2 and no three
/// (near-)collinear, so they are in general position for the predicates.
inline std::vector<Point2> general_position_points(Rng& rng, std::size_t n, double scale = 1000.0) {
  std::vector<Point2> pts;
  while (pts.size() < n) {
    const Point2 p{rng.uniform(0.0, scale), rng.uniform(0.0, scale)};
    bool ok = true;
    for (const auto& q : pts) ok = ok && std::hypot(p.x - q.x, p.y - q.y) > 1e-3 * scale;
    for (std::size_t i = 0; ok && i < pts.size(); ++i) {
      for (std::size_t j = i + 1; ok && j < pts.size(); ++j) {
        const double area = std::abs((pts[j].x - pts[i].x) * (p.y - pts[i].y) - (pts[j].y - pts[i].y) * (p.x - pts[i].x));
        const double base = std::hypot(pts[j].x - pts[i].x, pts[j].y - pts[i].y);
        ok = area / base > 1e-4 * scale;
      }
    }
    if (ok) pts.push_back(p);
  }
  return pts;
}

/// Andrew's monotone chain; counter-clockwise hull without repeated points.
inline std::vector<std::size_t> convex_hull(const std::vector<Point2>& pts) {
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return pts[a].x < pts[b].x || (pts[a].x == pts[b].x && pts[a].y < pts[b].y);
  });
  auto cross = [&](std::size_t o, std::size_t a, std::size_t b) {
    return (pts[a].x - pts[o].x) * (pts[b].y - pts[o].y) - (pts[a].y - pts[o].y) * (pts[b].x - pts[o].x);
  };
  std::vector<std::size_t> hull(2 * idx.size());
  std::size_t k = 0;
  for (std::size_t i : idx) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], i) <= 0) --k;
    hull[k++] = i;
  }
  for (std::size_t j = idx.size() - 1, t = k + 1; j-- > 0;) {
    const std::size_t i = idx[j];
    while (k >= t && cross(hull[k - 2], hull[k - 1], i) <= 0) --k;
    hull[k++] = i;
  }
  hull.resize(k - 1);
  return hull;
}

inline double polygon_area(const std::vector<Point2>& pts, const std::vector<std::size_t>& ring) {
  double a = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const auto& p = pts[ring[i]];
    const auto& q = pts[ring[(i + 1) % ring.size()]];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

/// Circumcircle test in plain long double arithmetic, independent of the
/// library's predicate: squared distance to circumcenter vs radius.
inline bool strictly_inside_circumcircle(Point2 a, Point2 b, Point2 c, Point2 d, double tol) {
  using L = long double;
  const L ax = a.x, ay = a.y, bx = b.x, by = b.y, cx = c.x, cy = c.y;
  const L den = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
  const L ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / den;
  const L uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / den;
  const L r2 = (ax - ux) * (ax - ux) + (ay - uy) * (ay - uy);
  const L d2 = (d.x - ux) * (d.x - ux) + (d.y - uy) * (d.y - uy);
  return d2 < r2 - tol;
}

/// Rectangle polygon (closed ring not repeated).
inline std::vector<Point2> rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

/// Random small graph whose nodes carry random F-dimensional embeddings
/// (or random crops when crop_size > 0), for model-level tests.
inline ruinscope::graph::ChipGraph random_graph(Rng& rng, std::size_t n, std::size_t feature_dim,
                                                const std::string& chip_id = "chip", int crop_size = 0) {
  using namespace ruinscope;
  std::vector<ingest::BuildingNode> nodes(n);
  const auto pts = general_position_points(rng, n, 256.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = nodes[i];
    node.id = chip_id + "-" + std::to_string(i);
    node.centroid = pts[i];
    node.envelope = {pts[i].x - 4, pts[i].y - 4, pts[i].x + 4, pts[i].y + 4};
    node.label = static_cast<ingest::DamageClass>(rng.index(3));
    const int side = crop_size > 0 ? crop_size : 2;
    node.pre_crop = Image(3, side, side);
    node.post_crop = Image(3, side, side);
    for (auto& v : node.pre_crop.data) v = static_cast<float>(rng.uniform());
    for (auto& v : node.post_crop.data) v = static_cast<float>(rng.uniform());
  }
  graph::ChipGraph g = graph::build_chip_graph(std::move(nodes));
  g.chip_id = chip_id;
  if (crop_size == 0) {
    nn::Tensor<float> emb({n, feature_dim});
    for (auto& v : emb.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    graph::attach_embeddings(g, std::move(emb));
  }
  return g;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ruinscope_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
