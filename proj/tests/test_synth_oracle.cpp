#include "torflux/synth_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "support/test_setups.hpp"
#include "torflux/errors.hpp"

using namespace torflux;

namespace {

Contour circle_contour(Vec2 c, double rad, int n = 160) {
  std::vector<Vec2> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    double th = 2.0 * M_PI * i / n;
    pts.push_back({c.r + rad * std::cos(th), c.z + rad * std::sin(th)});
  }
  return Contour::from_points(std::move(pts));
}

// Newton on B = 0 with a finite-difference Jacobian (coil-free equilibria).
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

// Densely sampled maximum of the exact flux along a contour.
double limiter_trace_max(const SyntheticEquilibrium& eq, const Contour& lim, int per_edge = 32) {
  double best = -1e300;
  for (std::size_t k = 0; k < lim.size(); ++k) {
    Vec2 a = lim.points[k], b = lim.points[(k + 1) % lim.size()];
    for (int j = 0; j < per_edge; ++j)
      best = std::max(best, psi_total(eq, a + (b - a) * (double(j) / per_edge)));
  }
  return best;
}

double min_distance_to(const std::vector<Vec2>& poly, const std::vector<Vec2>& target) {
  double d = 1e300;
  for (const auto& p : poly) d = std::min(d, point_polyline_distance(p, target));
  return d;
}

}  // namespace

TEST_CASE("gaussian generator is reproducible and unbiased") {
  GaussianRng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    double va = a.normal(), vb = b.normal(), vc = c.normal();
    all_equal = all_equal && (va == vb);
    any_diff = any_diff || (va != vc);
  }
  CHECK(all_equal);
  CHECK(any_diff);

  GaussianRng u(7);
  for (int i = 0; i < 10000; ++i) {
    double v = u.uniform();
    REQUIRE(v > 0.0);
    REQUIRE(v <= 1.0);
  }

  // Sample moments of 2e5 draws: s.e.(mean) ~ 0.0022, s.e.(var) ~ 0.0032.
  GaussianRng g(12345);
  const int n = 200000;
  double m1 = 0.0, m2 = 0.0, m4 = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = g.normal();
    m1 += v;
    m2 += v * v;
    m4 += v * v * v * v;
  }
  m1 /= n;
  m2 /= n;
  m4 /= n;
  CHECK(std::abs(m1) < 0.012);
  CHECK(std::abs(m2 - 1.0) < 0.017);
  CHECK(std::abs(m4 - 3.0) < 0.15);  // normal kurtosis
}

TEST_CASE("filament bundle carries the requested current over the requested shape") {
  Vec2 axis{2.55, 0.05};
  double a = 0.52, kappa = 1.30, delta = 0.30, ip = 6.0e5;
  std::vector<Filament> fs = dshape_filaments(axis, a, kappa, delta, 5, ip);

  CHECK(fs.size() == 1 + 6 + 12 + 18 + 24 + 30);

  double total = 0.0, zc = 0.0;
  for (const auto& f : fs) {
    total += f.current;
    zc += f.current * f.z;
    CHECK(f.current > 0.0);
    // bundle fills at most 0.9 of the requested surface
    CHECK(std::abs(f.r - axis.r) <= 0.9 * a + 1e-12);
    CHECK(std::abs(f.z - axis.z) <= 0.9 * kappa * a + 1e-12);
  }
  CHECK(total == doctest::Approx(ip).epsilon(1e-12));
  // ring angles are uniform, so the current-weighted elevation is the axis
  CHECK(std::abs(zc / total - axis.z) < 1e-12);

  // parabolic profile: every outer ring carries less current per filament
  double prev = fs[0].current;
  std::size_t at = 1;
  for (int k = 1; k <= 5; ++k) {
    double cur = fs[at].current;
    CHECK(cur < prev);
    for (int j = 0; j < 6 * k; ++j) CHECK(fs[at + j].current == doctest::Approx(cur));
    prev = cur;
    at += 6 * k;
  }

  CHECK_THROWS_AS(dshape_filaments(axis, -0.1, kappa, delta, 5, ip), Error);
  CHECK_THROWS_AS(dshape_filaments(axis, a, 0.0, delta, 5, ip), Error);
  CHECK_THROWS_AS(dshape_filaments(axis, a, kappa, 1.0, 5, ip), Error);
  CHECK_THROWS_AS(dshape_filaments(axis, a, kappa, delta, 0, ip), Error);
}

TEST_CASE("measurements are the exact superposition of plasma and coils") {
  SensorSet sensors = testsupport::make_sensors();
  SyntheticEquilibrium eq = testsupport::make_equilibrium();
  MeasurementSet ms = generate_measurements(eq, sensors);

  REQUIRE(ms.b.size() == (int)sensors.probes.size());
  REQUIRE(ms.f.size() == (int)sensors.flux_loops.size());
  REQUIRE(ms.s.size() == (int)sensors.saddle_loops.size());

  for (std::size_t i = 0; i < sensors.probes.size(); ++i)
    CHECK(ms.b[i] == doctest::Approx(B_total(eq, sensors.probes[i].pos).dot(sensors.probes[i].dir))
                         .epsilon(1e-14));
  for (std::size_t i = 0; i < sensors.flux_loops.size(); ++i)
    CHECK(ms.f[i] == doctest::Approx(psi_total(eq, sensors.flux_loops[i].pos)).epsilon(1e-14));
  for (std::size_t i = 0; i < sensors.saddle_loops.size(); ++i)
    CHECK(ms.s[i] == doctest::Approx(psi_total(eq, sensors.saddle_loops[i].pos_a) -
                                     psi_total(eq, sensors.saddle_loops[i].pos_b))
                         .epsilon(1e-13));

  // Subtracting the coil share recovers the plasma-only signal.
  SyntheticEquilibrium plasma_only = eq;
  plasma_only.coils = CoilSet{};
  plasma_only.coil_currents.clear();
  MeasurementSet pure = generate_measurements(plasma_only, sensors);
  MeasurementSet sub = subtract_coil_contributions(ms, sensors, eq.coils, eq.coil_currents);
  CHECK((sub.b - pure.b).cwiseAbs().maxCoeff() < 1e-12 * ms.b.cwiseAbs().maxCoeff());
  CHECK((sub.f - pure.f).cwiseAbs().maxCoeff() < 1e-12 * ms.f.cwiseAbs().maxCoeff());
  CHECK((sub.s - pure.s).cwiseAbs().maxCoeff() < 1e-12 * ms.f.cwiseAbs().maxCoeff());
}

TEST_CASE("noise is seeded per channel type and statistically bounded") {
  SensorSet sensors = testsupport::make_sensors();
  SyntheticEquilibrium clean = testsupport::make_equilibrium();
  MeasurementSet base = generate_measurements(clean, sensors);

  SyntheticEquilibrium noisy = clean;
  noisy.noise = {2.0e-3, 1.0e-3, 5.0e-4};
  noisy.seed = 99;

  MeasurementSet m1 = generate_measurements(noisy, sensors);
  MeasurementSet m2 = generate_measurements(noisy, sensors);
  CHECK((m1.b - m2.b).cwiseAbs().maxCoeff() == 0.0);  // bit-identical for one seed
  CHECK((m1.f - m2.f).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m1.s - m2.s).cwiseAbs().maxCoeff() == 0.0);

  noisy.seed = 100;
  MeasurementSet m3 = generate_measurements(noisy, sensors);
  CHECK((m1.b - m3.b).cwiseAbs().maxCoeff() > 0.0);

  // 1000 draws: every channel deviation within 6 sigma of its type, pooled
  // RMS per type within 5% of the requested sigma.
  double ssb = 0.0, ssf = 0.0, sss = 0.0;
  int nb = 0, nf = 0, ns = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    noisy.seed = seed;
    MeasurementSet m = generate_measurements(noisy, sensors);
    Eigen::VectorXd db = m.b - base.b, df = m.f - base.f, ds = m.s - base.s;
    CHECK(db.cwiseAbs().maxCoeff() < 6.0 * noisy.noise.sigma_b);
    CHECK(df.cwiseAbs().maxCoeff() < 6.0 * noisy.noise.sigma_f);
    CHECK(ds.cwiseAbs().maxCoeff() < 6.0 * noisy.noise.sigma_s);
    ssb += db.squaredNorm();
    ssf += df.squaredNorm();
    sss += ds.squaredNorm();
    nb += db.size();
    nf += df.size();
    ns += ds.size();
  }
  CHECK(std::sqrt(ssb / nb) == doctest::Approx(noisy.noise.sigma_b).epsilon(0.05));
  CHECK(std::sqrt(ssf / nf) == doctest::Approx(noisy.noise.sigma_f).epsilon(0.05));
  CHECK(std::sqrt(sss / ns) == doctest::Approx(noisy.noise.sigma_s).epsilon(0.05));
}

TEST_CASE("structured grid tiles the rectangle with tagged border nodes") {
  Vec2 lo{1.8, -0.9}, hi{3.3, 0.7};
  double h = 0.05;
  TriMesh mesh = grid_mesh(lo, hi, h);

  int nx = (int)std::ceil((hi.r - lo.r) / h) + 1;
  int nz = (int)std::ceil((hi.z - lo.z) / h) + 1;
  REQUIRE(mesh.n_nodes() == nx * nz);
  REQUIRE((int)mesh.triangles.size() == 2 * (nx - 1) * (nz - 1));
  CHECK(mesh.inner_nodes.empty());

  // every triangle positively oriented with near-right-isoceles angles
  double min_angle = 1e300;
  for (const auto& t : mesh.triangles) {
    Vec2 p0 = mesh.nodes[t[0]], p1 = mesh.nodes[t[1]], p2 = mesh.nodes[t[2]];
    double area2 = (p1 - p0).cross(p2 - p0);
    REQUIRE(area2 > 0.0);
    for (int e = 0; e < 3; ++e) {
      Vec2 a = mesh.nodes[t[(e + 1) % 3]] - mesh.nodes[t[e]];
      Vec2 b = mesh.nodes[t[(e + 2) % 3]] - mesh.nodes[t[e]];
      min_angle = std::min(min_angle, std::acos(a.dot(b) / (a.norm() * b.norm())));
    }
  }
  CHECK(min_angle > 40.0 * M_PI / 180.0);

  // border tagging: unique, complete, and nothing interior
  std::set<int> border(mesh.outer_nodes.begin(), mesh.outer_nodes.end());
  REQUIRE((int)border.size() == (int)mesh.outer_nodes.size());
  CHECK((int)border.size() == 2 * nx + 2 * (nz - 2));
  for (int n : border) {
    Vec2 p = mesh.nodes[n];
    bool on_edge = std::abs(p.r - lo.r) < 1e-12 || std::abs(p.r - hi.r) < 1e-12 ||
                   std::abs(p.z - lo.z) < 1e-12 || std::abs(p.z - hi.z) < 1e-12;
    CHECK(on_edge);
  }

  CHECK_THROWS_AS(grid_mesh(lo, hi, 0.0), Error);
  CHECK_THROWS_AS(grid_mesh(hi, lo, h), Error);
  CHECK_THROWS_AS(grid_mesh({-0.5, -1.0}, {0.5, 1.0}, h), Error);
}

TEST_CASE("reference boundary of a lone filament is the limiter-tangent flux circle") {
  SyntheticEquilibrium eq;
  eq.plasma = {{2.5, 0.0, 1.0e6}};
  Contour lim = circle_contour({2.5, 0.0}, 0.3);

  for (double gh : {0.02, 0.01}) {
    ReferenceBoundary rb = reference_boundary(eq, lim, gh);
    CHECK(rb.kind == BoundaryKind::Limiter);
    CHECK(!rb.xpoint.has_value());
    REQUIRE(rb.points.size() > 3);
    CHECK(rb.points.front().r == rb.points.back().r);
    CHECK(rb.points.front().z == rb.points.back().z);

    double tmax = limiter_trace_max(eq, lim);
    CHECK(std::abs(rb.psi_b - tmax) < 1e-3 * std::abs(tmax));
    CHECK(min_distance_to(rb.points, lim.points) < 2.0 * gh);  // grazes the limiter

    // the field is exactly mirror-symmetric about the filament plane
    std::vector<Vec2> mirrored = rb.points;
    for (auto& p : mirrored) p.z = -p.z;
    CHECK(hausdorff_distance(rb.points, mirrored) < gh);
  }
}

TEST_CASE("reference boundary self-converges under grid refinement") {
  SyntheticEquilibrium eq = testsupport::make_equilibrium();
  std::vector<Vec2> lpts;
  for (int i = 0; i < 160; ++i) {
    double th = 2.0 * M_PI * i / 160;
    lpts.push_back({2.55 + 0.62 * std::cos(th + std::asin(0.3) * std::sin(th)),
                    0.05 + 1.3 * 0.62 * std::sin(th)});
  }
  Contour lim = Contour::from_points(std::move(lpts));

  ReferenceBoundary coarse = reference_boundary(eq, lim, 0.02);
  ReferenceBoundary fine = reference_boundary(eq, lim, 0.01);
  CHECK(coarse.kind == BoundaryKind::Limiter);
  CHECK(fine.kind == BoundaryKind::Limiter);
  CHECK(std::abs(coarse.psi_b - fine.psi_b) < 1e-4);
  CHECK(hausdorff_distance(coarse.points, fine.points) < 0.01);

  double tmax = limiter_trace_max(eq, lim);
  CHECK(std::abs(fine.psi_b - tmax) < 1e-4 * std::abs(tmax));
}

TEST_CASE("vertical filament pair produces an x-point boundary") {
  SyntheticEquilibrium eq;
  eq.plasma = {{2.5, 0.05, 6.0e5}, {2.5, -0.75, 2.0e5}};
  Contour lim = circle_contour({2.52, 0.0}, 0.95);

  Vec2 oracle = field_null(eq.plasma, {2.5, -0.45});
  double psi_x = psi_filaments(eq.plasma, oracle);
  // the saddle level is admissible: above the limiter trace, below the axis
  CHECK(limiter_trace_max(eq, lim) < psi_x);
  CHECK(psi_total(eq, {2.5, 0.05 + 1e-3}) > psi_x);

  for (double gh : {0.02, 0.01}) {
    ReferenceBoundary rb = reference_boundary(eq, lim, gh);
    CHECK(rb.kind == BoundaryKind::XPoint);
    REQUIRE(rb.xpoint.has_value());
    CHECK((*rb.xpoint - oracle).norm() < 1e-9);  // polished on the exact field
    CHECK(std::abs(rb.psi_b - psi_x) < 1e-12 * std::abs(psi_x));
    REQUIRE(rb.points.size() > 3);
    // the separatrix passes through the saddle
    CHECK(point_polyline_distance(oracle, rb.points) < 3.0 * gh);
  }

  SyntheticEquilibrium cancel;
  cancel.plasma = {{2.5, 0.05, 1.0e5}, {2.5, -0.75, -1.0e5}};
  CHECK_THROWS_AS(reference_boundary(cancel, lim, 0.02), Error);
}
