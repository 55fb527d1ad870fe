#include "torflux/boundary_extract.hpp"

#include <cmath>

#include "doctest.h"
#include "support/test_setups.hpp"
#include "torflux/errors.hpp"
#include "torflux/synth_oracle.hpp"

using namespace torflux;

namespace {

Contour test_gamma() { return build_gamma_o(testsupport::make_sensors(), 0.08, 128); }

// Plasma analogue (filament in the mesh hole) plus an in-domain shaping
// filament below: the field null between them is an X-point whose separatrix
// stays clear of both the hole ring and the test limiter.
const InnerBoundary kHole{{2.5, 0.05}, 0.18, 0.18};
const std::vector<Filament> kDiverted{{2.5, 0.05, 6.0e5}, {2.6, -0.75, 2.0e5}};
const std::vector<Filament> kLimited{{2.5, 0.05, 6.0e5}};

Contour circle_contour(Vec2 c, double rad, int n = 128) {
  std::vector<Vec2> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    double th = 2.0 * M_PI * i / n;
    pts.push_back({c.r + rad * std::cos(th), c.z + rad * std::sin(th)});
  }
  return Contour::from_points(std::move(pts));
}

Contour big_limiter() { return circle_contour({2.52, 0.0}, 0.95); }

FemField sample_field(const TriMesh& mesh, const std::vector<Filament>& src, double sign = 1.0) {
  Eigen::VectorXd vals(mesh.n_nodes());
  for (int i = 0; i < mesh.n_nodes(); ++i) vals[i] = sign * psi_filaments(src, mesh.nodes[i]);
  return FemField(&mesh, std::move(vals));
}

// Newton iteration on B = 0 with a finite-difference Jacobian: critical
// points of psi coincide with nulls of the poloidal field.
Vec2 field_null(const std::vector<Filament>& src, Vec2 start) {
  Vec2 x = start;
  for (int it = 0; it < 80; ++it) {
    Vec2 F = B_filaments(src, x);
    if (std::hypot(F.r, F.z) < 1e-15) break;
    double eps = 1e-7;
    Vec2 Fr = B_filaments(src, {x.r + eps, x.z});
    Vec2 Fz = B_filaments(src, {x.r, x.z + eps});
    double a = (Fr.r - F.r) / eps, b = (Fz.r - F.r) / eps;
    double c = (Fr.z - F.z) / eps, d = (Fz.z - F.z) / eps;
    double det = a * d - b * c;
    REQUIRE(std::abs(det) > 1e-300);
    x = x + Vec2{(-d * F.r + b * F.z) / det, (c * F.r - a * F.z) / det};
  }
  Vec2 F = B_filaments(src, x);
  REQUIRE(std::hypot(F.r, F.z) < 1e-12);
  return x;
}

double winding_turns(const std::vector<Vec2>& poly, Vec2 p) {
  double total = 0.0;
  std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 a = poly[i] - p, b = poly[(i + 1) % n] - p;
    total += std::atan2(a.cross(b), a.dot(b));
  }
  return total / (2.0 * M_PI);
}

}  // namespace

TEST_CASE("saddle search lands on the analytic field null") {
  Contour gamma = test_gamma();
  Vec2 oracle = field_null(kDiverted, {2.55, -0.4});
  double psi_oracle = psi_filaments(kDiverted, oracle);

  for (double h : {0.06, 0.03}) {
    TriMesh mesh = build_annulus_mesh(gamma, kHole, h);
    FemField field = sample_field(mesh, kDiverted);
    std::vector<SaddlePoint> saddles = find_xpoints(field);
    REQUIRE(saddles.size() == 1);
    CHECK((saddles[0].pos - oracle).norm() < 0.5 * h);
    CHECK(std::abs(saddles[0].psi - psi_oracle) < 1e-3 * std::abs(psi_oracle));
  }

  // No interior critical point in the single-filament field.
  TriMesh mesh = build_annulus_mesh(gamma, kHole, 0.06);
  FemField limited = sample_field(mesh, kLimited);
  CHECK(find_xpoints(limited).empty());
}

TEST_CASE("boundary flux ordering follows the plasma current sign") {
  Contour gamma = test_gamma();
  TriMesh mesh = build_annulus_mesh(gamma, kHole, 0.06);
  Contour limiter = circle_contour({2.55, 0.05}, 0.80);

  FemField field = sample_field(mesh, kLimited);
  PsiBoundary pos = psi_boundary_value(field, limiter, {}, +1.0, {2.5, 0.05});
  CHECK(pos.kind == BoundaryKind::Limiter);
  CHECK(!pos.xpoint.has_value());

  // Independent oracle: dense sampling of the P1 field along the limiter
  // polyline; with positive current the boundary value is the trace maximum.
  double trace_max = -1e300;
  Vec2 argmax{};
  int n = static_cast<int>(limiter.size());
  for (int i = 0; i < n; ++i) {
    Vec2 a = limiter.points[i], b = limiter.points[(i + 1) % n];
    for (int k = 0; k < 200; ++k) {
      Vec2 p = a + (b - a) * (k / 200.0);
      auto v = field.try_eval(p);
      if (v && *v > trace_max) {
        trace_max = *v;
        argmax = p;
      }
    }
  }
  CHECK(pos.psi_b == doctest::Approx(trace_max).epsilon(1e-5));
  CHECK((pos.touch - argmax).norm() < 0.02);

  // Mirrored field and current: same geometry, negated flux.
  FemField neg = sample_field(mesh, kLimited, -1.0);
  PsiBoundary negb = psi_boundary_value(neg, limiter, {}, -1.0, {2.5, 0.05});
  CHECK(negb.psi_b == doctest::Approx(-pos.psi_b).epsilon(1e-12));
  CHECK((negb.touch - pos.touch).norm() < 1e-12);

  // An admissible saddle overrides the limiter value.
  FemField div = sample_field(mesh, kDiverted);
  std::vector<SaddlePoint> saddles = find_xpoints(div);
  REQUIRE(saddles.size() == 1);
  PsiBoundary xb = psi_boundary_value(div, big_limiter(), saddles, +1.0, {2.5, 0.05});
  CHECK(xb.kind == BoundaryKind::XPoint);
  REQUIRE(xb.xpoint.has_value());
  CHECK(xb.psi_b == doctest::Approx(saddles[0].psi).epsilon(1e-12));

  CHECK_THROWS_AS(psi_boundary_value(field, limiter, {}, 0.0, {2.5, 0.05}), Error);
}

TEST_CASE("iso-contour stays on the level set and is oriented CCW") {
  Contour gamma = test_gamma();
  TriMesh mesh = build_annulus_mesh(gamma, kHole, 0.06);
  FemField field = sample_field(mesh, kLimited);
  Contour limiter = big_limiter();

  double level = 0.55;
  std::vector<Vec2> poly = extract_isocontour(field, level, limiter, {2.5, 0.05}, 0.05, false);
  REQUIRE(poly.size() == 257);  // default 256 + repeated first point
  CHECK((poly.front() - poly.back()).norm() == 0.0);

  std::vector<Vec2> ring(poly.begin(), poly.end() - 1);
  CHECK(polygon_area(ring) > 0.0);
  CHECK(winding_turns(ring, {2.5, 0.05}) == doctest::Approx(1.0).epsilon(1e-6));
  for (const Vec2& p : ring) {
    CHECK(limiter.contains(p));
    CHECK(std::abs(psi_filaments(kLimited, p) - level) < 1e-3);
  }

  CHECK_THROWS_AS(extract_isocontour(field, 1e9, limiter, {2.5, 0.05}, 0.05, false), Error);
}

TEST_CASE("open chains close along the limiter only when allowed") {
  Contour gamma = test_gamma();
  TriMesh mesh = build_annulus_mesh(gamma, kHole, 0.06);
  FemField field = sample_field(mesh, kLimited);

  // Level inside the outer-ring flux range: the level curve exits the domain
  // through the outer ring, leaving open chains.
  double omin = 1e300, omax = -1e300;
  for (int i : mesh.outer_nodes) {
    omin = std::min(omin, field.values()[i]);
    omax = std::max(omax, field.values()[i]);
  }
  double level = 0.5 * (omin + omax);

  // Limiter hugging the observation contour from inside.
  std::vector<Vec2> lpts;
  for (const Vec2& p : gamma.points) lpts.push_back(Vec2{2.5, 0.0} + (p - Vec2{2.5, 0.0}) * 0.97);
  Contour limiter = Contour::from_points(std::move(lpts));

  std::vector<Vec2> closed =
      extract_isocontour(field, level, limiter, {2.5, 0.05}, 0.06, true);
  std::vector<Vec2> ring(closed.begin(), closed.end() - 1);
  CHECK(winding_turns(ring, {2.5, 0.05}) == doctest::Approx(1.0).epsilon(1e-6));
  for (const Vec2& p : ring)
    if (!limiter.contains(p)) CHECK(point_polyline_distance(p, limiter.points) < 0.06);

  try {
    extract_isocontour(field, level, limiter, {2.5, 0.05}, 0.06, false);
    FAIL("expected no closed contour without limiter closure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoClosedContour);
  }
}

TEST_CASE("full extraction returns the separatrix through the X-point") {
  Contour gamma = test_gamma();
  Vec2 oracle = field_null(kDiverted, {2.55, -0.4});
  double psi_x = psi_filaments(kDiverted, oracle);
  Contour limiter = big_limiter();
  CurrentCenter cc{2.5, 0.05, 6.0e5};

  TriMesh mesh = build_annulus_mesh(gamma, kHole, 0.06);
  FemField field = sample_field(mesh, kDiverted);
  PlasmaBoundary pb = extract_boundary(field, limiter, cc);

  CHECK(pb.kind == BoundaryKind::XPoint);
  REQUIRE(pb.xpoint.has_value());
  CHECK((*pb.xpoint - oracle).norm() < 0.06);
  CHECK(std::abs(pb.psi_b - psi_x) < 1e-3 * std::abs(psi_x));
  REQUIRE(pb.points.size() >= 4);
  CHECK((pb.points.front() - pb.points.back()).norm() == 0.0);

  std::vector<Vec2> ring(pb.points.begin(), pb.points.end() - 1);
  CHECK(winding_turns(ring, {2.5, 0.05}) == doctest::Approx(1.0).epsilon(1e-6));
  double dmin = 1e300, lvl_err = 0.0;
  for (const Vec2& p : ring) {
    dmin = std::min(dmin, (p - oracle).norm());
    lvl_err = std::max(lvl_err, std::abs(psi_filaments(kDiverted, p) - psi_x));
  }
  CHECK(dmin < 0.05);      // separatrix passes by the X-point
  CHECK(lvl_err < 2e-2);   // level nudge + interpolation stay small

  // Sign flip mirrors the extraction exactly.
  FemField neg = sample_field(mesh, kDiverted, -1.0);
  PlasmaBoundary nb = extract_boundary(neg, limiter, {2.5, 0.05, -6.0e5});
  CHECK(nb.kind == BoundaryKind::XPoint);
  REQUIRE(nb.points.size() == pb.points.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i)
    dmax = std::max(dmax, (pb.points[i] - nb.points[i]).norm());
  CHECK(dmax < 1e-12);
}

TEST_CASE("full extraction falls back to a limiter-touching boundary") {
  Contour gamma = test_gamma();
  TriMesh mesh = build_annulus_mesh(gamma, kHole, 0.06);
  FemField field = sample_field(mesh, kLimited);
  Contour limiter = circle_contour({2.55, 0.05}, 0.80);
  CurrentCenter cc{2.5, 0.05, 6.0e5};

  PlasmaBoundary pb = extract_boundary(field, limiter, cc);
  CHECK(pb.kind == BoundaryKind::Limiter);
  CHECK(!pb.xpoint.has_value());

  std::vector<Vec2> ring(pb.points.begin(), pb.points.end() - 1);
  CHECK(winding_turns(ring, {2.5, 0.05}) == doctest::Approx(1.0).epsilon(1e-6));
  double dmin = 1e300;
  for (const Vec2& p : ring) dmin = std::min(dmin, point_polyline_distance(p, limiter.points));
  CHECK(dmin < 5e-3);  // touches the limiter

  // A limiter that misses the solution domain entirely cannot bound a plasma.
  Contour tiny = circle_contour({2.5, 0.05}, 0.05, 32);
  try {
    extract_boundary(field, tiny, cc);
    FAIL("expected failure for a limiter outside the domain");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoClosedContour);
  }
}
