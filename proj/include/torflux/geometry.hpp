#pragma once

#include <cstddef>
#include <vector>

namespace torflux {

// Point / vector in the poloidal (r, z) plane.
struct Vec2 {
  double r = 0.0;
  double z = 0.0;

  Vec2() = default;
  Vec2(double r_, double z_) : r(r_), z(z_) {}

  Vec2 operator+(Vec2 o) const { return {r + o.r, z + o.z}; }
  Vec2 operator-(Vec2 o) const { return {r - o.r, z - o.z}; }
  Vec2 operator*(double s) const { return {r * s, z * s}; }
  Vec2 operator/(double s) const { return {r / s, z / s}; }
  Vec2& operator+=(Vec2 o) { r += o.r; z += o.z; return *this; }
  Vec2& operator-=(Vec2 o) { r -= o.r; z -= o.z; return *this; }

  double dot(Vec2 o) const { return r * o.r + z * o.z; }
  double cross(Vec2 o) const { return r * o.z - z * o.r; }
  double norm() const;
  Vec2 normalized() const;
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

// Closed simple polyline, counter-clockwise, with per-vertex arc-length
// positions, unit tangents and outward unit normals. The vertex list does
// not repeat the first point; closure is implicit.
struct Contour {
  std::vector<Vec2> points;
  std::vector<double> arclen;   // arc-length position of each vertex, arclen[0] = 0
  std::vector<Vec2> tangent;    // unit tangent (central difference, CCW sense)
  std::vector<Vec2> normal;     // outward unit normal = (t.z, -t.r)
  double length = 0.0;          // total perimeter

  static Contour from_points(std::vector<Vec2> pts);

  std::size_t size() const { return points.size(); }
  bool contains(Vec2 p) const;
};

// Quadrature sample on a directed boundary: point plus unit tangent.
struct FluxSample {
  Vec2 p;
  Vec2 t;
};

// Signed area of a closed polygon (positive when counter-clockwise).
double polygon_area(const std::vector<Vec2>& pts);

// Even-odd point-in-polygon test.
bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly);

// Convex hull (Andrew monotone chain), CCW, no repeated endpoint.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts);

// Shrink a convex CCW polygon inward by distance d (half-plane clipping).
// Throws GeometryError when the offset polygon degenerates.
std::vector<Vec2> offset_convex_inward(const std::vector<Vec2>& poly, double d);

// Resample a closed polyline to n points at uniform arc-length spacing,
// starting at the original first vertex. Output has n points, no repeat.
std::vector<Vec2> resample_closed(const std::vector<Vec2>& pts, int n);

// Distance from point to segment [a, b].
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

// Minimum distance from a point to a closed polyline.
double point_polyline_distance(Vec2 p, const std::vector<Vec2>& poly);

// Symmetric Hausdorff distance between two closed polylines
// (vertices of one against segments of the other, both ways).
double hausdorff_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b);

// Finite-difference weights (Fornberg) for the m-th derivative at x0 from
// the given stencil nodes; exact for polynomials up to degree nodes-1.
std::vector<double> fd_weights(double x0, const std::vector<double>& nodes, int m);

}  // namespace torflux
