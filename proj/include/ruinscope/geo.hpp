#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace ruinscope::geo {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Axis-aligned rectangle enclosing a building footprint, in pixels.
struct Envelope {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  bool has_area() const { return max_x > min_x && max_y > min_y; }

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

using TriangleIndices = std::array<std::size_t, 3>;
using EdgeIndices = std::pair<std::size_t, std::size_t>;

struct Triangulation {
  std::vector<Point2> points;
  /// Counter-clockwise (positive signed area) index triples.
  std::vector<TriangleIndices> triangles;
  /// Undirected edges, first < second, sorted ascending, each pair once.
  std::vector<EdgeIndices> edges;
};

/// Tolerance applied to predicates after normalizing input to the unit square.
inline constexpr double kPredicateTolerance = 1e-9;

Envelope envelope_of(std::span<const Point2> polygon);

Point2 centroid(const Envelope& envelope);

/// Twice the signed area of (a, b, c); positive when counter-clockwise.
double orient2d(const Point2& a, const Point2& b, const Point2& c);

/// Positive iff d lies strictly inside the circumcircle of the CCW triangle
/// (a, b, c); zero when cocircular.
double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d);

/// Maps points affinely into [0,1]^2 using the larger extent as the scale.
std::vector<Point2> normalize_points(std::span<const Point2> points);

/// Delaunay triangulation by Bowyer-Watson insertion.
///
/// Hull handling uses a symbolic vertex at infinity rather than a finite
/// super-triangle, so the triangle union always covers the convex hull.
/// Cocircular quads take the diagonal with the smallest lower endpoint index.
/// Two points or all-collinear input yield no triangles and a path graph
/// along the dominant axis.
Triangulation delaunay(std::span<const Point2> points);

}  // namespace ruinscope::geo
