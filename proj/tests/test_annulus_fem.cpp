#include "torflux/annulus_fem.hpp"

#include <cmath>

#include "doctest.h"
#include "support/test_setups.hpp"
#include "torflux/errors.hpp"
#include "torflux/synth_oracle.hpp"

using namespace torflux;

namespace {

Contour test_gamma() { return build_gamma_o(testsupport::make_sensors(), 0.08, 128); }

const InnerBoundary kInner{{2.5, 0.05}, 0.30, 0.30};

// Exact vacuum field with all sources inside the inner hole: harmonic on the
// annulus, so FEM solutions can be compared against it directly.
const std::vector<Filament> kSources{{2.45, 0.00, 5.0e5}, {2.6, 0.12, 1.5e5}};

double exact_psi(Vec2 p) { return psi_filaments(kSources, p); }

Eigen::VectorXd ring_values(const TriMesh& mesh, const std::vector<int>& ring) {
  Eigen::VectorXd v(ring.size());
  for (std::size_t i = 0; i < ring.size(); ++i) v[i] = exact_psi(mesh.nodes[ring[i]]);
  return v;
}

// (1/r) dpsi/dn equals B . t for the CCW tangent, sampled at the outer-edge
// Gauss points.
Eigen::VectorXd outer_g(const TriMesh& mesh) {
  std::vector<FluxSample> samples = outer_flux_samples(mesh);
  Eigen::VectorXd g(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    g[i] = B_filaments(kSources, samples[i].p).dot(samples[i].t);
  return g;
}

}  // namespace

TEST_CASE("annulus mesh structure invariants") {
  Contour gamma = test_gamma();
  TriMesh mesh = build_annulus_mesh(gamma, kInner, 0.06);

  // Annulus topology: V - E + F = 0 for a surface with two boundary circles.
  CHECK(mesh.euler_characteristic() == 0);
  CHECK(mesh.min_angle_deg() >= 15.0);

  // Ordering contract: inner ring occupies the lowest indices in ring order,
  // outer ring the highest.
  REQUIRE(!mesh.inner_nodes.empty());
  REQUIRE(!mesh.outer_nodes.empty());
  for (std::size_t i = 0; i < mesh.inner_nodes.size(); ++i)
    CHECK(mesh.inner_nodes[i] == static_cast<int>(i));
  int n0 = mesh.n_nodes() - static_cast<int>(mesh.outer_nodes.size());
  for (std::size_t i = 0; i < mesh.outer_nodes.size(); ++i)
    CHECK(mesh.outer_nodes[i] == n0 + static_cast<int>(i));

  // All triangles CCW with positive area; all nodes at r > 0.
  for (const auto& t : mesh.triangles) {
    Vec2 a = mesh.nodes[t[0]], b = mesh.nodes[t[1]], c = mesh.nodes[t[2]];
    CHECK((b - a).cross(c - a) > 0.0);
  }
  for (const auto& p : mesh.nodes) CHECK(p.r > 0.0);

  // Inner nodes on the ellipse, outer nodes on the contour polyline.
  for (int i : mesh.inner_nodes) {
    Vec2 d = mesh.nodes[i] - kInner.center;
    double v = (d.r / kInner.semi_r) * (d.r / kInner.semi_r) +
               (d.z / kInner.semi_z) * (d.z / kInner.semi_z);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  }
  for (int i : mesh.outer_nodes)
    CHECK(point_polyline_distance(mesh.nodes[i], gamma.points) < 1e-9);

  // Boundary edge lists form closed rings over their node sets.
  CHECK(mesh.inner_edges.size() == mesh.inner_nodes.size());
  CHECK(mesh.outer_edges.size() == mesh.outer_nodes.size());
}

TEST_CASE("refinement zones increase local density") {
  Contour gamma = test_gamma();
  TriMesh coarse = build_annulus_mesh(gamma, kInner, 0.08);
  Vec2 spot{3.2, 0.0};
  TriMesh fine = build_annulus_mesh(gamma, kInner, 0.08, {{spot, 0.02}});

  auto count_near = [&](const TriMesh& m) {
    int c = 0;
    for (const auto& p : m.nodes)
      if ((p - spot).norm() < 0.15) ++c;
    return c;
  };
  CHECK(count_near(fine) > 2 * count_near(coarse));
  CHECK(fine.min_angle_deg() >= 15.0);
}

TEST_CASE("mesh rejects intersecting boundaries") {
  Contour gamma = test_gamma();
  InnerBoundary too_big{{2.5, 0.05}, 1.4, 1.4};
  CHECK_THROWS_AS(build_annulus_mesh(gamma, too_big, 0.06), Error);
}

TEST_CASE("stiffness matrix annihilates constants and is symmetric") {
  TriMesh mesh = build_annulus_mesh(test_gamma(), kInner, 0.08);
  FemSystem sys(mesh);
  const SpMat& A = sys.stiffness();
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.n_nodes());
  CHECK((A * ones).lpNorm<Eigen::Infinity>() < 1e-10 * A.coeff(0, 0));
  SpMat At = SpMat(A.transpose());
  CHECK((At - A).norm() < 1e-12 * A.norm());

  // Constant Dirichlet data propagates exactly.
  Eigen::VectorXd v = Eigen::VectorXd::Constant(sys.n_inner(), 3.25);
  Eigen::VectorXd f = Eigen::VectorXd::Constant(sys.n_outer(), 3.25);
  Eigen::VectorXd sol = sys.solve_dirichlet(v, f);
  CHECK((sol.array() - 3.25).abs().maxCoeff() < 1e-10);
}

TEST_CASE("boundary-value solves converge at second order") {
  Contour gamma = test_gamma();
  double errs_d[3], errs_n[3];
  double hs[3] = {0.08, 0.04, 0.02};
  for (int k = 0; k < 3; ++k) {
    TriMesh mesh = build_annulus_mesh(gamma, kInner, hs[k]);
    FemSystem sys(mesh);
    Eigen::VectorXd v = ring_values(mesh, mesh.inner_nodes);
    Eigen::VectorXd f = ring_values(mesh, mesh.outer_nodes);
    Eigen::VectorXd sol_d = sys.solve_dirichlet(v, f);
    errs_d[k] = l2_error(mesh, sol_d, exact_psi);

    Eigen::VectorXd g = outer_g(mesh);
    Eigen::VectorXd sol_n = sys.solve_neumann(mesh, v, g);
    errs_n[k] = l2_error(mesh, sol_n, exact_psi);
  }
  for (int k = 0; k < 2; ++k) {
    double order_d = std::log2(errs_d[k] / errs_d[k + 1]);
    CHECK(order_d > 1.7);
    CHECK(order_d < 2.4);
    double order_n = std::log2(errs_n[k] / errs_n[k + 1]);
    CHECK(order_n > 1.7);
    CHECK(order_n < 2.4);
  }
}

TEST_CASE("control operator is symmetric positive definite") {
  TriMesh mesh = build_annulus_mesh(test_gamma(), kInner, 0.08);
  FemSystem sys(mesh);
  ControlOperator op(sys, mesh, 5e-4);
  const Eigen::MatrixXd& S = op.S();
  CHECK((S - S.transpose()).norm() < 1e-10 * S.norm());
  CHECK(op.min_eigenvalue() > 0.0);

  // Regularization part is itself symmetric positive semi-definite.
  const Eigen::MatrixXd& SD = op.S_D();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(SD);
  CHECK(es.eigenvalues().minCoeff() > -1e-10 * SD.norm());
}

TEST_CASE("control solve recovers the inner trace from exact boundary data") {
  Contour gamma = test_gamma();
  TriMesh mesh = build_annulus_mesh(gamma, kInner, 0.06);
  FemSystem sys(mesh);
  ControlOperator op(sys, mesh, 5e-4);

  Eigen::VectorXd f = ring_values(mesh, mesh.outer_nodes);
  Eigen::VectorXd g = outer_g(mesh);
  ControlRhs rhs = assemble_control_rhs(sys, mesh, f, g);
  CHECK(rhs.data_constant > 0.0);

  ControlSolution cs = solve_control(op, rhs);
  CHECK(cs.residual < 1e-10);
  CHECK(cs.j_regularization >= 0.0);
  // With compatible data the misfit at the optimum is discretization-small
  // compared to the misfit of the zero control, which is data_constant.
  CHECK(cs.j_misfit < 1e-2 * cs.data_constant);

  double rel = inner_trace_l2(mesh, cs.u, exact_psi) /
               inner_trace_l2(mesh, Eigen::VectorXd::Zero(sys.n_inner()), exact_psi);
  CHECK(rel < 0.01);

  // The recovered control reproduces the field inside: the Dirichlet solve
  // with (u, f) stays close to the exact flux in L2 over the annulus.
  Eigen::VectorXd field = sys.solve_dirichlet(cs.u, f);
  double scale = l2_error(mesh, Eigen::VectorXd::Zero(mesh.n_nodes()), exact_psi);
  CHECK(l2_error(mesh, field, exact_psi) < 0.01 * scale);
}

TEST_CASE("precomputed control matrix reproduces the fresh operator") {
  TriMesh mesh = build_annulus_mesh(test_gamma(), kInner, 0.08);
  FemSystem sys(mesh);
  ControlOperator fresh(sys, mesh, 5e-4);
  ControlOperator cached(sys, mesh, 5e-4, fresh.S());

  Eigen::VectorXd f = ring_values(mesh, mesh.outer_nodes);
  Eigen::VectorXd g = outer_g(mesh);
  ControlRhs rhs = assemble_control_rhs(sys, mesh, f, g);
  Eigen::VectorXd u1 = fresh.solve(rhs.l);
  Eigen::VectorXd u2 = cached.solve(rhs.l);
  CHECK((u1 - u2).norm() < 1e-12 * u1.norm());
}

TEST_CASE("mesh bank selects the nearest center") {
  Contour gamma = test_gamma();
  std::vector<Vec2> centers{{2.35, -0.1}, {2.55, 0.05}, {2.75, 0.2}};
  MeshBank bank = build_mesh_bank(gamma, centers, 0.30, 0.08, 5e-4);
  REQUIRE(bank.entries.size() == 3);

  CurrentCenter cc;
  cc.r_c = 2.58;
  cc.z_c = 0.02;
  cc.i_p = 5e5;
  const BankEntry& e = bank.select(cc);
  CHECK(e.inner.center.r == doctest::Approx(2.55));
  CHECK(e.inner.center.z == doctest::Approx(0.05));

  // Outer contour points correspond one-to-one with outer mesh nodes (the
  // reconstruction samples Cauchy data through this correspondence).
  for (std::size_t i = 0; i < e.outer_contour.size(); ++i) {
    int node = e.mesh.outer_nodes[i];
    CHECK((e.outer_contour.points[i] - e.mesh.nodes[node]).norm() < 1e-14);
  }

  MeshBank empty;
  CHECK_THROWS_AS(empty.select(cc), Error);
}

TEST_CASE("field evaluation reproduces linear functions and handles outside points") {
  TriMesh mesh = build_annulus_mesh(test_gamma(), kInner, 0.08);
  Eigen::VectorXd vals(mesh.n_nodes());
  for (int i = 0; i < mesh.n_nodes(); ++i)
    vals[i] = 0.7 * mesh.nodes[i].r - 1.3 * mesh.nodes[i].z + 0.25;
  FemField field(&mesh, vals);

  for (Vec2 p : {Vec2{3.1, 0.2}, Vec2{2.5, 0.6}, Vec2{1.9, -0.3}}) {
    auto v = field.try_eval(p);
    REQUIRE(v.has_value());
    CHECK(*v == doctest::Approx(0.7 * p.r - 1.3 * p.z + 0.25).epsilon(1e-12));
  }
  // Inside the inner hole and far outside the outer ring.
  CHECK(!field.try_eval(kInner.center).has_value());
  CHECK(!field.try_eval({5.0, 0.0}).has_value());
  CHECK_THROWS_AS(field.eval({5.0, 0.0}), Error);
}
