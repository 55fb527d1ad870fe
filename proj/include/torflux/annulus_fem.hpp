#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "torflux/geometry.hpp"
#include "torflux/th_fit.hpp"

namespace torflux {

// Conforming triangle mesh. For annulus meshes the inner-boundary nodes come
// first (indices [0, n_inner)) and the outer-boundary nodes last
// (indices [size - n_outer, size)); interior nodes sit in between.
struct TriMesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;  // CCW
  std::vector<int> inner_nodes;               // fictitious boundary ring, in order
  std::vector<int> outer_nodes;               // observation boundary ring, in order
  std::vector<std::array<int, 2>> inner_edges;
  std::vector<std::array<int, 2>> outer_edges;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  double min_angle_deg() const;
  int euler_characteristic() const;  // V - E + F (faces excluding the outer region)
  std::vector<Vec2> inner_polyline() const;
  std::vector<Vec2> outer_polyline() const;
};

// Fictitious inner boundary: axis-aligned ellipse (circle when semi_r == semi_z).
struct InnerBoundary {
  Vec2 center;
  double semi_r = 0.0;
  double semi_z = 0.0;
};

struct RefineZone {
  Vec2 at;
  double h = 0.0;  // local target edge length
};

// Structured annulus mesh between the inner ellipse and the outer contour:
// rays from the inner center through a graded angular set, geometric radial
// grading from the inner azimuthal spacing up to the target edge length h.
// Throws GeometryError when the boundaries intersect and MeshQualityError
// when the minimum triangle angle drops below 15 degrees.
TriMesh build_annulus_mesh(const Contour& outer, const InnerBoundary& inner, double h,
                           const std::vector<RefineZone>& zones = {});

// Two Gauss points per outer edge (edge k -> samples 2k, 2k+1) with the unit
// edge tangent (CCW). Flux data for the mixed solves is sampled here.
std::vector<FluxSample> outer_flux_samples(const TriMesh& mesh);

using SpMat = Eigen::SparseMatrix<double>;

// Assembled operators for the annulus: full 1/r-weighted stiffness plus the
// factorizations needed for the Dirichlet and mixed problems.
// Noncopyable (owns factorizations).
class FemSystem {
public:
  explicit FemSystem(const TriMesh& mesh);
  FemSystem(const FemSystem&) = delete;
  FemSystem& operator=(const FemSystem&) = delete;

  const SpMat& stiffness() const { return A_; }
  int n_inner() const { return n_i_; }
  int n_outer() const { return n_o_; }
  int n_interior() const { return n_int_; }

  // psi = v on the inner ring, psi = f on the outer ring.
  Eigen::VectorXd solve_dirichlet(const Eigen::VectorXd& v, const Eigen::VectorXd& f) const;
  // psi = v on the inner ring, (1/r) dpsi/dn = g on the outer ring. g holds
  // the flux at the two Gauss points of every outer edge (see
  // outer_flux_samples); sampling at nodes with averaged tangents instead
  // stalls the convergence of the mixed solve.
  Eigen::VectorXd solve_neumann(const TriMesh& mesh, const Eigen::VectorXd& v,
                                const Eigen::VectorXd& g) const;

  // Outer-boundary load vector: l_i = closed-int g phi_i ds over outer edges,
  // two-point Gauss per edge with g given at the sample points.
  Eigen::VectorXd outer_boundary_load(const TriMesh& mesh, const Eigen::VectorXd& g) const;

  double smallest_pivot_dd() const { return pivot_dd_; }
  double smallest_pivot_dn() const { return pivot_dn_; }

private:
  SpMat A_;          // full stiffness
  SpMat A_int_gi_;   // interior rows x inner-boundary cols
  SpMat A_int_go_;   // interior rows x outer-boundary cols
  SpMat A_dn_gi_;    // (interior + outer) rows x inner-boundary cols
  Eigen::SimplicialLDLT<SpMat> dd_;  // interior block
  Eigen::SimplicialLDLT<SpMat> dn_;  // interior + outer block
  int n_i_ = 0, n_o_ = 0, n_int_ = 0;
  double pivot_dd_ = 0.0, pivot_dn_ = 0.0;
};

// Dense optimal-control operator over inner-boundary values:
//   S = (1+eps) S_D - S_N,  S_D/S_N the Dirichlet/Neumann energy matrices.
// Symmetric positive definite for eps > 0; factorized once per mesh.
class ControlOperator {
public:
  ControlOperator(const FemSystem& sys, const TriMesh& mesh, double eps);
  ControlOperator(const FemSystem& sys, const TriMesh& mesh, double eps,
                  Eigen::MatrixXd precomputed_S);

  const Eigen::MatrixXd& S() const { return S_; }
  const Eigen::MatrixXd& S_D() const { return SD_; }
  double epsilon() const { return eps_; }
  double min_eigenvalue() const { return min_eig_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& l) const;

private:
  void factorize();
  Eigen::MatrixXd S_, SD_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double eps_ = 0.0;
  double min_eig_ = 0.0;
};

// Per-slice right-hand side and the lifted data fields it came from.
struct ControlRhs {
  Eigen::VectorXd l;        // -(A (x_D - x_N)) restricted to inner-boundary rows
  Eigen::VectorXd lift_d;   // full-field Dirichlet lift psi_D(0, f)
  Eigen::VectorXd lift_n;   // full-field Neumann lift psi_N(0, g)
  double data_constant = 0.0;  // c = 1/2 (x_D - x_N)^T A (x_D - x_N)
};

// f: outer-ring nodal flux values; g: outer-edge Gauss-point flux samples.
ControlRhs assemble_control_rhs(const FemSystem& sys, const TriMesh& mesh,
                                const Eigen::VectorXd& f, const Eigen::VectorXd& g);

struct ControlSolution {
  Eigen::VectorXd u;           // optimal inner-boundary values
  double j_total = 0.0;        // J(u)
  double j_misfit = 0.0;       // Kohn-Vogelius misfit part
  double j_regularization = 0.0;
  double data_constant = 0.0;
  double residual = 0.0;       // ||S u - l|| / ||l||
};

ControlSolution solve_control(const ControlOperator& op, const ControlRhs& rhs);

// P1 field on a mesh with point evaluation via a background-grid locator.
class FemField {
public:
  FemField(const TriMesh* mesh, Eigen::VectorXd values);

  const TriMesh& mesh() const { return *mesh_; }
  const Eigen::VectorXd& values() const { return values_; }

  // Locate p and interpolate; returns nullopt outside the mesh.
  std::optional<double> try_eval(Vec2 p) const;
  double eval(Vec2 p) const;  // throws DomainError outside the mesh
  std::optional<int> find_triangle(Vec2 p) const;

private:
  const TriMesh* mesh_;
  Eigen::VectorXd values_;
  // uniform background grid binning triangle candidates
  double cell_ = 0.0;
  Vec2 lo_;
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<int>> bins_;
};

// L2 norm over the mesh of (field - exact) using 3-point edge-midpoint
// quadrature (exact for quadratics).
template <class F>
double l2_error(const TriMesh& mesh, const Eigen::VectorXd& values, F&& exact) {
  double acc = 0.0;
  for (const auto& t : mesh.triangles) {
    Vec2 a = mesh.nodes[t[0]], b = mesh.nodes[t[1]], c = mesh.nodes[t[2]];
    double area = 0.5 * (b - a).cross(c - a);
    Vec2 mab = (a + b) * 0.5, mbc = (b + c) * 0.5, mca = (c + a) * 0.5;
    double vab = 0.5 * (values[t[0]] + values[t[1]]);
    double vbc = 0.5 * (values[t[1]] + values[t[2]]);
    double vca = 0.5 * (values[t[2]] + values[t[0]]);
    double e1 = vab - exact(mab), e2 = vbc - exact(mbc), e3 = vca - exact(mca);
    acc += area / 3.0 * (e1 * e1 + e2 * e2 + e3 * e3);
  }
  return std::sqrt(acc);
}

// L2 norm of (values - exact) along the inner-boundary polyline (per-edge
// Simpson with linear interpolation of the field at edge midpoints).
template <class F>
double inner_trace_l2(const TriMesh& mesh, const Eigen::VectorXd& inner_values, F&& exact) {
  double acc = 0.0;
  int k = static_cast<int>(mesh.inner_nodes.size());
  for (int i = 0; i < k; ++i) {
    int a = mesh.inner_nodes[i], b = mesh.inner_nodes[(i + 1) % k];
    Vec2 pa = mesh.nodes[a], pb = mesh.nodes[b];
    double len = (pb - pa).norm();
    double ea = inner_values[i] - exact(pa);
    double eb = inner_values[(i + 1) % k] - exact(pb);
    double em = 0.5 * (inner_values[i] + inner_values[(i + 1) % k]) - exact((pa + pb) * 0.5);
    acc += len / 6.0 * (ea * ea + 4.0 * em * em + eb * eb);
  }
  return std::sqrt(acc);
}

// One mesh-bank entry: geometry plus everything needed to run slices.
struct BankEntry {
  TriMesh mesh;
  InnerBoundary inner;
  std::unique_ptr<FemSystem> sys;
  std::unique_ptr<ControlOperator> control;
  Contour outer_contour;  // mesh outer ring as a Contour (for Cauchy sampling)
};

struct MeshBank {
  std::vector<std::unique_ptr<BankEntry>> entries;
  double h = 0.0;
  double epsilon = 0.0;

  // Entry whose inner-boundary center is nearest to the current center.
  const BankEntry& select(const CurrentCenter& cc) const;
};

MeshBank build_mesh_bank(const Contour& gamma_o, const std::vector<Vec2>& centers,
                         double radius, double h, double eps,
                         const std::vector<RefineZone>& zones = {});

}  // namespace torflux
