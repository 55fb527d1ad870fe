#include "torflux/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "torflux/errors.hpp"

namespace torflux {

double Vec2::norm() const { return std::hypot(r, z); }

Vec2 Vec2::normalized() const {
  double n = norm();
  if (n == 0.0) fail(ErrorCode::GeometryError, "cannot normalize zero vector");
  return {r / n, z / n};
}

double polygon_area(const std::vector<Vec2>& pts) {
  double a = 0.0;
  std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) a += pts[i].cross(pts[(i + 1) % n]);
  return 0.5 * a;
}

Contour Contour::from_points(std::vector<Vec2> pts) {
  if (pts.size() < 3) fail(ErrorCode::GeometryError, "contour needs at least 3 points");
  // Drop an explicitly repeated closing point.
  if ((pts.front() - pts.back()).norm() < 1e-14) pts.pop_back();
  if (pts.size() < 3) fail(ErrorCode::GeometryError, "contour needs at least 3 distinct points");
  if (polygon_area(pts) < 0.0) std::reverse(pts.begin(), pts.end());
  if (std::abs(polygon_area(pts)) < 1e-14)
    fail(ErrorCode::GeometryError, "contour is degenerate (zero area)");

  Contour c;
  c.points = std::move(pts);
  std::size_t n = c.points.size();
  c.arclen.resize(n);
  c.tangent.resize(n);
  c.normal.resize(n);
  c.arclen[0] = 0.0;
  for (std::size_t i = 1; i < n; ++i)
    c.arclen[i] = c.arclen[i - 1] + (c.points[i] - c.points[i - 1]).norm();
  c.length = c.arclen[n - 1] + (c.points[0] - c.points[n - 1]).norm();
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 d = c.points[(i + 1) % n] - c.points[(i + n - 1) % n];
    c.tangent[i] = d.normalized();
    c.normal[i] = {c.tangent[i].z, -c.tangent[i].r};
  }
  return c;
}

bool Contour::contains(Vec2 p) const { return point_in_polygon(p, points); }

bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly) {
  bool in = false;
  std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((poly[i].z > p.z) != (poly[j].z > p.z)) {
      double xi = poly[j].r + (poly[i].r - poly[j].r) * (p.z - poly[j].z) / (poly[i].z - poly[j].z);
      if (p.r < xi) in = !in;
    }
  }
  return in;
}

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  if (pts.size() < 3) fail(ErrorCode::GeometryError, "hull needs at least 3 points");
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) {
    return a.r < b.r || (a.r == b.r && a.z < b.z);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](Vec2 a, Vec2 b) { return a.r == b.r && a.z == b.z; }),
            pts.end());
  std::size_t n = pts.size();
  if (n < 3) fail(ErrorCode::GeometryError, "hull needs at least 3 distinct points");
  std::vector<Vec2> h(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {  // lower
    while (k >= 2 && (h[k - 1] - h[k - 2]).cross(pts[i] - h[k - 2]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = n - 1, t = k + 1; i-- > 0;) {  // upper
    while (k >= t && (h[k - 1] - h[k - 2]).cross(pts[i] - h[k - 2]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  if (h.size() < 3) fail(ErrorCode::GeometryError, "degenerate hull (collinear points)");
  return h;
}

// Clip a convex CCW polygon against the half-plane left of a->b.
static std::vector<Vec2> clip_halfplane(const std::vector<Vec2>& poly, Vec2 a, Vec2 d) {
  std::vector<Vec2> out;
  std::size_t n = poly.size();
  auto side = [&](Vec2 p) { return d.cross(p - a); };
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 p = poly[i], q = poly[(i + 1) % n];
    double sp = side(p), sq = side(q);
    if (sp >= 0) out.push_back(p);
    if ((sp > 0 && sq < 0) || (sp < 0 && sq > 0)) {
      double t = sp / (sp - sq);
      out.push_back(p + (q - p) * t);
    }
  }
  return out;
}

std::vector<Vec2> offset_convex_inward(const std::vector<Vec2>& poly, double d) {
  if (poly.size() < 3) fail(ErrorCode::GeometryError, "offset needs a polygon");
  if (d < 0) fail(ErrorCode::GeometryError, "inward offset distance must be nonnegative");
  std::vector<Vec2> cur = poly;
  std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 a = poly[i], b = poly[(i + 1) % n];
    Vec2 t = (b - a).normalized();
    Vec2 inward{-t.z, t.r};  // left of the edge for CCW polygons
    cur = clip_halfplane(cur, a + inward * d, t);
    if (cur.size() < 3)
      fail(ErrorCode::GeometryError, "inward offset degenerates the polygon");
  }
  if (polygon_area(cur) < 1e-12)
    fail(ErrorCode::GeometryError, "inward offset degenerates the polygon");
  return cur;
}

std::vector<Vec2> resample_closed(const std::vector<Vec2>& pts, int n) {
  if (pts.size() < 3) fail(ErrorCode::GeometryError, "resample needs a closed polyline");
  if (n < 3) fail(ErrorCode::GeometryError, "resample count must be >= 3");
  std::size_t m = pts.size();
  std::vector<double> s(m + 1);
  s[0] = 0.0;
  for (std::size_t i = 1; i <= m; ++i) s[i] = s[i - 1] + (pts[i % m] - pts[i - 1]).norm();
  double total = s[m];
  if (total <= 0) fail(ErrorCode::GeometryError, "zero-length polyline");
  std::vector<Vec2> out(n);
  std::size_t seg = 0;
  for (int k = 0; k < n; ++k) {
    double target = total * k / n;
    while (seg + 1 < m && s[seg + 1] < target) ++seg;
    double ds = s[seg + 1] - s[seg];
    double t = ds > 0 ? (target - s[seg]) / ds : 0.0;
    out[k] = pts[seg % m] + (pts[(seg + 1) % m] - pts[seg % m]) * t;
  }
  return out;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 ab = b - a;
  double len2 = ab.dot(ab);
  double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + ab * t)).norm();
}

double point_polyline_distance(Vec2 p, const std::vector<Vec2>& poly) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i)
    best = std::min(best, point_segment_distance(p, poly[i], poly[(i + 1) % n]));
  return best;
}

double hausdorff_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  double h = 0.0;
  for (Vec2 p : a) h = std::max(h, point_polyline_distance(p, b));
  for (Vec2 p : b) h = std::max(h, point_polyline_distance(p, a));
  return h;
}

std::vector<double> fd_weights(double x0, const std::vector<double>& nodes, int m) {
  // Fornberg's algorithm, "Generation of finite difference formulas on
  // arbitrarily spaced grids", Math. Comp. 51 (1988).
  int nn = static_cast<int>(nodes.size());
  if (m >= nn) fail(ErrorCode::DomainError, "fd_weights: derivative order too high for stencil");
  std::vector<std::vector<double>> c(nn, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0;
  double c4 = nodes[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < nn; ++i) {
    int mn = std::min(i, m);
    double c2 = 1.0;
    double c5 = c4;
    c4 = nodes[i] - x0;
    for (int j = 0; j < i; ++j) {
      double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k)
        c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(nn);
  for (int i = 0; i < nn; ++i) w[i] = c[i][m];
  return w;
}

const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::PoleSingularity: return "PoleSingularity";
    case ErrorCode::AxisDomain: return "AxisDomain";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::FilamentSingularity: return "FilamentSingularity";
    case ErrorCode::MissingCurrent: return "MissingCurrent";
    case ErrorCode::ZeroCurrent: return "ZeroCurrent";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::PoleOutsideHull: return "PoleOutsideHull";
    case ErrorCode::GeometryError: return "GeometryError";
    case ErrorCode::MeshQualityError: return "MeshQualityError";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::SingularControlSystem: return "SingularControlSystem";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::NoClosedContour: return "NoClosedContour";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CacheMismatch: return "CacheMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "UnknownError";
}

}  // namespace torflux
