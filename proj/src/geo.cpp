#include "ruinscope/geo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "ruinscope/error.hpp"

namespace ruinscope::geo {
namespace {

void require_finite(const Point2& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    throw Error(Errc::NonFinite, "point coordinate is NaN or infinite");
  }
}

constexpr std::size_t kGhost = std::numeric_limits<std::size_t>::max();

class Mesh {
 public:
  explicit Mesh(std::span<const Point2> pts) : pts_(pts) {}

  void seed(std::size_t a, std::size_t b, std::size_t c) {
    if (orient2d(pts_[a], pts_[b], pts_[c]) < 0) std::swap(b, c);
    add({a, b, c});
    add({b, a, kGhost});
    add({c, b, kGhost});
    add({a, c, kGhost});
  }

  void insert(std::size_t p) {
    const Point2& pt = pts_[p];
    std::size_t start = kGhost;
    for (std::size_t t = 0; t < tris_.size() && start == kGhost; ++t) {
      if (alive_[t] && contains(t, pt)) start = t;
    }
    if (start == kGhost) {
      // Only possible for a point within tolerance of an existing vertex.
      throw Error(Errc::DuplicatePoints, "point coincides with an existing vertex");
    }

    std::vector<std::size_t> cavity;
    std::unordered_set<std::size_t> in_cavity{start};
    std::deque<std::size_t> queue{start};
    while (!queue.empty()) {
      const std::size_t t = queue.front();
      queue.pop_front();
      cavity.push_back(t);
      for (int e = 0; e < 3; ++e) {
        const auto& v = tris_[t];
        const std::size_t nb = neighbor(v[e], v[(e + 1) % 3]);
        if (nb == kGhost || in_cavity.count(nb)) continue;
        if (conflicts(nb, pt)) {
          in_cavity.insert(nb);
          queue.push_back(nb);
        }
      }
    }
    std::sort(cavity.begin(), cavity.end());

    std::vector<std::pair<std::size_t, std::size_t>> boundary;
    for (std::size_t t : cavity) {
      const auto v = tris_[t];
      for (int e = 0; e < 3; ++e) {
        const std::size_t nb = neighbor(v[e], v[(e + 1) % 3]);
        if (nb == kGhost || !in_cavity.count(nb)) boundary.emplace_back(v[e], v[(e + 1) % 3]);
      }
    }
    for (std::size_t t : cavity) remove(t);
    for (const auto& [u, w] : boundary) {
      if (u == kGhost) {
        add({w, p, kGhost});
      } else if (w == kGhost) {
        add({p, u, kGhost});
      } else {
        add({u, w, p});
      }
    }
  }

  std::vector<TriangleIndices> real_triangles() const {
    std::vector<TriangleIndices> out;
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      if (alive_[t] && tris_[t][2] != kGhost) out.push_back(tris_[t]);
    }
    return out;
  }

 private:
  static std::uint64_t key(std::size_t u, std::size_t v) {
    const std::uint64_t a = u == kGhost ? 0xffffffffULL : u;
    const std::uint64_t b = v == kGhost ? 0xffffffffULL : v;
    return (a << 32) | b;
  }

  std::size_t neighbor(std::size_t u, std::size_t v) const {
    auto it = edge_owner_.find(key(v, u));
    return it == edge_owner_.end() ? kGhost : it->second;
  }

  void add(TriangleIndices v) {
    const std::size_t t = tris_.size();
    tris_.push_back(v);
    alive_.push_back(true);
    for (int e = 0; e < 3; ++e) edge_owner_[key(v[e], v[(e + 1) % 3])] = t;
  }

  void remove(std::size_t t) {
    alive_[t] = false;
    const auto& v = tris_[t];
    for (int e = 0; e < 3; ++e) {
      auto it = edge_owner_.find(key(v[e], v[(e + 1) % 3]));
      if (it != edge_owner_.end() && it->second == t) edge_owner_.erase(it);
    }
  }

  // Point inside the triangle, or strictly beyond a ghost's hull edge.
  bool contains(std::size_t t, const Point2& p) const {
    const auto& v = tris_[t];
    if (v[2] == kGhost) return ghost_conflict(v[0], v[1], p);
    return orient2d(pts_[v[0]], pts_[v[1]], p) >= -kPredicateTolerance &&
           orient2d(pts_[v[1]], pts_[v[2]], p) >= -kPredicateTolerance &&
           orient2d(pts_[v[2]], pts_[v[0]], p) >= -kPredicateTolerance;
  }

  bool conflicts(std::size_t t, const Point2& p) const {
    const auto& v = tris_[t];
    if (v[2] == kGhost) return ghost_conflict(v[0], v[1], p);
    return incircle(pts_[v[0]], pts_[v[1]], pts_[v[2]], p) > kPredicateTolerance;
  }

  // Ghost (a, b, inf): exterior lies left of a->b.
  bool ghost_conflict(std::size_t a, std::size_t b, const Point2& p) const {
    const Point2& pa = pts_[a];
    const Point2& pb = pts_[b];
    const double o = orient2d(pa, pb, p);
    if (o > kPredicateTolerance) return true;
    if (o < -kPredicateTolerance) return false;
    const double dot = (p.x - pa.x) * (pb.x - pa.x) + (p.y - pa.y) * (pb.y - pa.y);
    const double len2 = (pb.x - pa.x) * (pb.x - pa.x) + (pb.y - pa.y) * (pb.y - pa.y);
    return dot > 0.0 && dot < len2;
  }

  std::span<const Point2> pts_;
  std::vector<TriangleIndices> tris_;
  std::vector<bool> alive_;
  std::unordered_map<std::uint64_t, std::size_t> edge_owner_;
};

EdgeIndices ordered(std::size_t a, std::size_t b) { return a < b ? EdgeIndices{a, b} : EdgeIndices{b, a}; }

// Lawson flips: repair any residual violation and apply the cocircular
// diagonal preference.
void legalize(std::span<const Point2> pts, std::vector<TriangleIndices>& tris) {
  std::unordered_map<std::uint64_t, std::size_t> owner;
  auto key = [](std::size_t u, std::size_t v) { return (static_cast<std::uint64_t>(u) << 32) | v; };
  auto link = [&](std::size_t t) {
    for (int e = 0; e < 3; ++e) owner[key(tris[t][e], tris[t][(e + 1) % 3])] = t;
  };
  auto unlink = [&](std::size_t t) {
    for (int e = 0; e < 3; ++e) owner.erase(key(tris[t][e], tris[t][(e + 1) % 3]));
  };
  for (std::size_t t = 0; t < tris.size(); ++t) link(t);

  std::vector<EdgeIndices> stack;
  for (const auto& t : tris) {
    for (int e = 0; e < 3; ++e) stack.push_back(ordered(t[e], t[(e + 1) % 3]));
  }
  std::sort(stack.begin(), stack.end());
  stack.erase(std::unique(stack.begin(), stack.end()), stack.end());
  std::reverse(stack.begin(), stack.end());

  std::size_t budget = 64 * tris.size() + 1024;
  while (!stack.empty() && budget > 0) {
    const auto [u, v] = stack.back();
    stack.pop_back();
    auto i1 = owner.find(key(u, v));
    auto i2 = owner.find(key(v, u));
    if (i1 == owner.end() || i2 == owner.end()) continue;
    const std::size_t t1 = i1->second;
    const std::size_t t2 = i2->second;
    auto opposite = [&](std::size_t t, std::size_t a, std::size_t b) {
      for (std::size_t x : tris[t]) {
        if (x != a && x != b) return x;
      }
      return a;
    };
    const std::size_t w = opposite(t1, u, v);  // left of u->v
    const std::size_t x = opposite(t2, u, v);  // right of u->v
    // Flip only strictly convex quads.
    if (orient2d(pts[w], pts[x], pts[v]) <= kPredicateTolerance ||
        orient2d(pts[x], pts[w], pts[u]) <= kPredicateTolerance) {
      continue;
    }
    // Evaluate with the triangle in CCW order (u, v, w).
    const double ic = incircle(pts[u], pts[v], pts[w], pts[x]);
    bool flip = ic > kPredicateTolerance;
    if (!flip && ic >= -kPredicateTolerance) flip = ordered(w, x) < ordered(u, v);
    if (!flip) continue;
    --budget;
    unlink(t1);
    unlink(t2);
    tris[t1] = {u, x, w};
    tris[t2] = {x, v, w};
    link(t1);
    link(t2);
    for (auto e : {ordered(u, x), ordered(x, v), ordered(v, w), ordered(w, u)}) stack.push_back(e);
  }
}

Triangulation path_fallback(std::span<const Point2> points) {
  Triangulation out;
  out.points.assign(points.begin(), points.end());
  const auto [xmin, xmax] = std::minmax_element(points.begin(), points.end(),
                                                [](auto& a, auto& b) { return a.x < b.x; });
  const auto [ymin, ymax] = std::minmax_element(points.begin(), points.end(),
                                                [](auto& a, auto& b) { return a.y < b.y; });
  const bool along_x = (xmax->x - xmin->x) >= (ymax->y - ymin->y);
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Point2& p = points[a];
    const Point2& q = points[b];
    return along_x ? std::pair{p.x, p.y} < std::pair{q.x, q.y} : std::pair{p.y, p.x} < std::pair{q.y, q.x};
  });
  for (std::size_t k = 1; k < order.size(); ++k) out.edges.push_back(ordered(order[k - 1], order[k]));
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

}  // namespace

Envelope envelope_of(std::span<const Point2> polygon) {
  if (polygon.size() < 3) throw Error(Errc::EmptyPolygon, "polygon needs at least 3 vertices");
  Envelope env{polygon[0].x, polygon[0].y, polygon[0].x, polygon[0].y};
  for (const auto& p : polygon) {
    require_finite(p);
    env.min_x = std::min(env.min_x, p.x);
    env.min_y = std::min(env.min_y, p.y);
    env.max_x = std::max(env.max_x, p.x);
    env.max_y = std::max(env.max_y, p.y);
  }
  if (!env.has_area()) throw Error(Errc::DegenerateEnvelope, "polygon envelope has zero area");
  return env;
}

Point2 centroid(const Envelope& envelope) {
  return {(envelope.min_x + envelope.max_x) / 2.0, (envelope.min_y + envelope.max_y) / 2.0};
}

double orient2d(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - bdy * cdx) + blift * (cdx * ady - cdy * adx) +
         clift * (adx * bdy - ady * bdx);
}

std::vector<Point2> normalize_points(std::span<const Point2> points) {
  std::vector<Point2> out(points.begin(), points.end());
  if (points.empty()) return out;
  double min_x = points[0].x, max_x = points[0].x, min_y = points[0].y, max_y = points[0].y;
  for (const auto& p : points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  double scale = std::max(max_x - min_x, max_y - min_y);
  if (scale <= 0.0) scale = 1.0;
  for (auto& p : out) p = {(p.x - min_x) / scale, (p.y - min_y) / scale};
  return out;
}

Triangulation delaunay(std::span<const Point2> points) {
  if (points.size() < 2) throw Error(Errc::TooFewPoints, "delaunay needs at least 2 points");
  for (const auto& p : points) require_finite(p);
  {
    std::vector<Point2> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const Point2& a, const Point2& b) { return std::pair{a.x, a.y} < std::pair{b.x, b.y}; });
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw Error(Errc::DuplicatePoints, "input contains duplicate points");
    }
  }

  const std::vector<Point2> unit = normalize_points(points);
  const std::size_t n = unit.size();
  if (n == 2) return path_fallback(points);

  // Initial triangle: first point, the point farthest from it, and the point
  // farthest from that line.
  std::size_t a = 0, b = 0, c = 0;
  double best = -1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double dx = unit[i].x - unit[a].x, dy = unit[i].y - unit[a].y;
    if (dx * dx + dy * dy > best) {
      best = dx * dx + dy * dy;
      b = i;
    }
  }
  best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double o = std::abs(orient2d(unit[a], unit[b], unit[i]));
    if (o > best) {
      best = o;
      c = i;
    }
  }
  if (best <= kPredicateTolerance) return path_fallback(points);

  Mesh mesh(unit);
  mesh.seed(a, b, c);
  for (std::size_t i = 0; i < n; ++i) {
    if (i != a && i != b && i != c) mesh.insert(i);
  }

  Triangulation out;
  out.points.assign(points.begin(), points.end());
  out.triangles = mesh.real_triangles();
  legalize(unit, out.triangles);
  for (auto& t : out.triangles) {
    // Canonical rotation: smallest index first, CCW preserved.
    const auto m = std::min_element(t.begin(), t.end()) - t.begin();
    std::rotate(t.begin(), t.begin() + m, t.end());
  }
  std::sort(out.triangles.begin(), out.triangles.end());
  for (const auto& t : out.triangles) {
    for (int e = 0; e < 3; ++e) out.edges.push_back(ordered(t[e], t[(e + 1) % 3]));
  }
  std::sort(out.edges.begin(), out.edges.end());
  out.edges.erase(std::unique(out.edges.begin(), out.edges.end()), out.edges.end());
  return out;
}

}  // namespace ruinscope::geo
