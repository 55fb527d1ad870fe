#include "torflux/annulus_fem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "torflux/errors.hpp"

namespace torflux {

namespace {
constexpr double PI = 3.14159265358979323846;
}

double TriMesh::min_angle_deg() const {
  double worst = 180.0;
  for (const auto& t : triangles) {
    Vec2 p[3] = {nodes[t[0]], nodes[t[1]], nodes[t[2]]};
    for (int i = 0; i < 3; ++i) {
      Vec2 u = p[(i + 1) % 3] - p[i];
      Vec2 v = p[(i + 2) % 3] - p[i];
      double ang = std::acos(std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0));
      worst = std::min(worst, ang * 180.0 / PI);
    }
  }
  return worst;
}

int TriMesh::euler_characteristic() const {
  std::set<std::pair<int, int>> edges;
  for (const auto& t : triangles)
    for (int i = 0; i < 3; ++i) {
      int a = t[i], b = t[(i + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  return n_nodes() - static_cast<int>(edges.size()) + n_triangles();
}

std::vector<Vec2> TriMesh::inner_polyline() const {
  std::vector<Vec2> out;
  out.reserve(inner_nodes.size());
  for (int i : inner_nodes) out.push_back(nodes[i]);
  return out;
}

std::vector<Vec2> TriMesh::outer_polyline() const {
  std::vector<Vec2> out;
  out.reserve(outer_nodes.size());
  for (int i : outer_nodes) out.push_back(nodes[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Mesh generation

namespace {

// First positive ray-segment intersection parameter t: o + t d on [a, b].
std::optional<double> ray_segment(Vec2 o, Vec2 d, Vec2 a, Vec2 b) {
  Vec2 e = b - a;
  double denom = d.cross(e);
  if (std::abs(denom) < 1e-16) return std::nullopt;
  Vec2 ao = a - o;
  double t = ao.cross(e) / denom;   // along the ray
  double s = ao.cross(d) / denom;   // along the segment
  if (t <= 0.0 || s < -1e-12 || s > 1.0 + 1e-12) return std::nullopt;
  return t;
}

double ray_to_contour(Vec2 o, Vec2 d, const Contour& c) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto t = ray_segment(o, d, c.points[i], c.points[(i + 1) % n]);
    if (t && *t < best) best = *t;
  }
  if (!std::isfinite(best))
    fail(ErrorCode::GeometryError, "annulus mesh: ray from inner center misses outer contour");
  return best;
}

}  // namespace

TriMesh build_annulus_mesh(const Contour& outer, const InnerBoundary& inner, double h,
                           const std::vector<RefineZone>& zones) {
  if (h <= 0) fail(ErrorCode::ConfigError, "mesh size h must be positive");
  if (inner.semi_r <= 0 || inner.semi_z <= 0)
    fail(ErrorCode::GeometryError, "inner boundary semi-axes must be positive");
  Vec2 c0 = inner.center;
  if (!outer.contains(c0))
    fail(ErrorCode::GeometryError, "inner boundary center outside the outer contour");

  // Angular density: points per radian proportional to (outer distance)/h,
  // so the azimuthal spacing at the outer ring is about h. Refinement zones
  // (local h capped at a factor 3) raise the density so the arc spacing at
  // the zone's own radius is about the zone size.
  const int NS = 2048;
  std::vector<double> dens(NS);
  std::vector<double> ray_out(NS);
  for (int i = 0; i < NS; ++i) {
    double th = 2.0 * PI * i / NS;
    Vec2 d{std::cos(th), std::sin(th)};
    ray_out[i] = ray_to_contour(c0, d, outer);
    dens[i] = std::max(ray_out[i] / h, 0.5);
    for (const auto& z : zones) {
      double zh = std::max(z.h, h / 3.0);
      double rho_z = std::max((z.at - c0).norm(), 1e-6);
      double zth = std::atan2(z.at.z - c0.z, z.at.r - c0.r);
      double dth = std::remainder(th - zth, 2.0 * PI);
      double halfwidth = 2.5 * zh / rho_z;
      if (std::abs(dth) < halfwidth) dens[i] = std::max(dens[i], rho_z / zh);
    }
  }
  std::vector<double> cum(NS + 1, 0.0);
  for (int i = 0; i < NS; ++i) cum[i + 1] = cum[i] + dens[i] * (2.0 * PI / NS);
  int K = std::max(16, static_cast<int>(std::ceil(cum[NS])));
  std::vector<double> theta(K);
  {
    int seg = 0;
    for (int j = 0; j < K; ++j) {
      double target = cum[NS] * j / K;
      while (seg + 1 < NS && cum[seg + 1] < target) ++seg;
      double t = (target - cum[seg]) / (cum[seg + 1] - cum[seg]);
      theta[j] = 2.0 * PI * (seg + t) / NS;
    }
  }

  // Rays: inner point on the ellipse at parameter theta, outer point by ray
  // casting through it from the center.
  std::vector<Vec2> pin(K), pout(K);
  double inner_perim = 0.0;
  for (int j = 0; j < K; ++j) {
    Vec2 q{c0.r + inner.semi_r * std::cos(theta[j]), c0.z + inner.semi_z * std::sin(theta[j])};
    pin[j] = q;
    Vec2 d = (q - c0).normalized();
    double t_out = ray_to_contour(c0, d, outer);
    double t_in = (q - c0).norm();
    if (t_out <= t_in * 1.05)
      fail(ErrorCode::GeometryError, "inner boundary reaches or crosses the outer contour");
    pout[j] = c0 + d * t_out;
  }
  for (int j = 0; j < K; ++j) inner_perim += (pin[(j + 1) % K] - pin[j]).norm();

  // Radial layer fractions: geometric grading from the inner azimuthal
  // spacing up to h, normalized to the mean ray length. A refinement zone
  // narrows the angular wedge through it at every radius, so the radial cap
  // tracks 1.5x the wedge width (proportional to radius) to keep the aspect
  // ratio bounded along the whole wedge.
  double mean_len = 0.0, mean_t_in = 0.0;
  for (int j = 0; j < K; ++j) {
    mean_len += (pout[j] - pin[j]).norm();
    mean_t_in += (pin[j] - c0).norm();
  }
  mean_len /= K;
  mean_t_in /= K;
  auto radial_cap = [&](double from_inner) {
    double cap = h;
    double rho = mean_t_in + from_inner;  // distance from the inner center
    for (const auto& z : zones) {
      double zh = std::max(z.h, h / 3.0);
      double rho_z = std::max((z.at - c0).norm(), 1e-6);
      cap = std::min(cap, std::max(zh, 1.5 * zh * rho / rho_z));
    }
    return cap;
  };
  // The azimuthal fan width grows only linearly with the distance from the
  // inner center, so the layer thickness must not outrun 2x the local width:
  // otherwise the aspect ratio near the inner ring grows without bound as h
  // shrinks and shape regularity (hence convergence) is lost.
  double width0 = inner_perim / K;
  double t0 = std::clamp(width0, h / 8.0, radial_cap(0.0));
  std::vector<double> frac{0.0};
  {
    // Accumulate geometric steps past the ray length, then rescale the ladder
    // to span it exactly: every layer shrinks a little instead of a sliver
    // layer absorbing the remainder.
    std::vector<double> steps;
    double acc = 0.0, step = t0;
    while (acc < mean_len) {
      double width = width0 * (mean_t_in + acc) / mean_t_in;
      step = std::min({step, 2.0 * width, radial_cap(acc + 0.5 * step)});
      steps.push_back(step);
      acc += step;
      step = std::min(step * 1.3, h);
    }
    double run = 0.0;
    for (double s : steps) {
      run += s;
      frac.push_back(run / acc);
    }
    frac.back() = 1.0;
  }
  int M = static_cast<int>(frac.size()) - 1;  // number of layers
  if (M < 2) fail(ErrorCode::GeometryError, "annulus too thin for the requested mesh size");

  TriMesh mesh;
  mesh.nodes.reserve(static_cast<std::size_t>(K) * (M + 1));
  for (int i = 0; i <= M; ++i)
    for (int j = 0; j < K; ++j)
      mesh.nodes.push_back(pin[j] + (pout[j] - pin[j]) * frac[i]);

  auto id = [K](int i, int j) { return i * K + (j % K); };
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < K; ++j) {
      int a = id(i, j), b = id(i, j + 1), c = id(i + 1, j + 1), d = id(i + 1, j);
      // split the quad along its shorter diagonal
      double dac = (mesh.nodes[a] - mesh.nodes[c]).norm();
      double dbd = (mesh.nodes[b] - mesh.nodes[d]).norm();
      if (dac <= dbd) {
        mesh.triangles.push_back({a, b, c});
        mesh.triangles.push_back({a, c, d});
      } else {
        mesh.triangles.push_back({a, b, d});
        mesh.triangles.push_back({b, c, d});
      }
    }
  }
  // enforce CCW
  for (auto& t : mesh.triangles) {
    Vec2 a = mesh.nodes[t[0]], b = mesh.nodes[t[1]], c = mesh.nodes[t[2]];
    if ((b - a).cross(c - a) < 0) std::swap(t[1], t[2]);
  }

  // A strongly off-center fan shears the quads where the rays graze the outer
  // contour. Pull nodes of badly sheared triangles toward their neighbor
  // average, accepting a move only when it improves the node's worst incident
  // angle and keeps every incident triangle CCW; well-shaped regions and the
  // radial grading there stay untouched (no candidate nodes, no movement).
  {
    auto tri_angle = [&](const std::array<int, 3>& t) {
      Vec2 p[3] = {mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]};
      double worst = PI;
      for (int i = 0; i < 3; ++i) {
        Vec2 u = p[(i + 1) % 3] - p[i], v = p[(i + 2) % 3] - p[i];
        worst = std::min(worst, std::acos(std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0)));
      }
      return worst * 180.0 / PI;
    };
    const int n_nodes = static_cast<int>(mesh.nodes.size());
    std::vector<std::vector<int>> nbr(n_nodes), inc(n_nodes);
    for (int ti = 0; ti < static_cast<int>(mesh.triangles.size()); ++ti)
      for (int i = 0; i < 3; ++i) {
        int a = mesh.triangles[ti][i];
        inc[a].push_back(ti);
        nbr[a].push_back(mesh.triangles[ti][(i + 1) % 3]);
        nbr[a].push_back(mesh.triangles[ti][(i + 2) % 3]);
      }
    for (auto& v : nbr) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    std::vector<char> fixed(n_nodes, 0);
    for (int j = 0; j < K; ++j) fixed[id(0, j)] = fixed[id(M, j)] = 1;
    auto node_quality = [&](int n) {
      double q = 180.0;
      for (int ti : inc[n]) q = std::min(q, tri_angle(mesh.triangles[ti]));
      return q;
    };
    for (int sweep = 0; sweep < 40; ++sweep) {
      std::vector<int> cand;
      for (const auto& t : mesh.triangles)
        if (tri_angle(t) < 20.0)
          for (int n : t)
            if (!fixed[n]) cand.push_back(n);
      std::sort(cand.begin(), cand.end());
      cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
      if (cand.empty()) break;
      bool moved = false;
      for (int n : cand) {
        Vec2 avg{0.0, 0.0};
        for (int m : nbr[n]) avg += mesh.nodes[m];
        avg = avg * (1.0 / nbr[n].size());
        Vec2 old_pos = mesh.nodes[n];
        double old_q = node_quality(n);
        mesh.nodes[n] = old_pos + (avg - old_pos) * 0.5;
        bool ok = node_quality(n) > old_q;
        for (int ti : inc[n]) {
          const auto& t = mesh.triangles[ti];
          Vec2 a = mesh.nodes[t[0]], b = mesh.nodes[t[1]], c = mesh.nodes[t[2]];
          if ((b - a).cross(c - a) <= 0) ok = false;
        }
        if (ok)
          moved = true;
        else
          mesh.nodes[n] = old_pos;
      }
      if (!moved) break;
    }
  }

  mesh.inner_nodes.resize(K);
  mesh.outer_nodes.resize(K);
  for (int j = 0; j < K; ++j) {
    mesh.inner_nodes[j] = id(0, j);
    mesh.outer_nodes[j] = id(M, j);
  }
  for (int j = 0; j < K; ++j) {
    mesh.inner_edges.push_back({id(0, j), id(0, j + 1)});
    mesh.outer_edges.push_back({id(M, j), id(M, j + 1)});
  }

  for (const auto& nd : mesh.nodes)
    if (nd.r <= 0)
      fail(ErrorCode::GeometryError, "annulus mesh reaches the symmetry axis (r <= 0)");
  double ang = mesh.min_angle_deg();
  if (ang < 15.0)
    fail(ErrorCode::MeshQualityError,
         "annulus mesh minimum angle " + std::to_string(ang) + " deg < 15 deg");
  return mesh;
}

// ---------------------------------------------------------------------------
// FEM operators

namespace {

SpMat sparse_block(const SpMat& A, int r0, int nr, int c0, int nc) {
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) {
      int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
      if (r >= r0 && r < r0 + nr && c >= c0 && c < c0 + nc)
        trips.emplace_back(r - r0, c - c0, it.value());
    }
  SpMat B(nr, nc);
  B.setFromTriplets(trips.begin(), trips.end());
  return B;
}

}  // namespace

FemSystem::FemSystem(const TriMesh& mesh) {
  int N = mesh.n_nodes();
  n_i_ = static_cast<int>(mesh.inner_nodes.size());
  n_o_ = static_cast<int>(mesh.outer_nodes.size());
  n_int_ = N - n_i_ - n_o_;
  if (n_i_ <= 0 || n_o_ <= 0 || n_int_ <= 0)
    fail(ErrorCode::GeometryError, "FEM system needs inner, interior and outer nodes");
  // The solvers below rely on the annulus ordering contract.
  for (int j = 0; j < n_i_; ++j)
    if (mesh.inner_nodes[j] != j)
      fail(ErrorCode::GeometryError, "annulus mesh must order inner-boundary nodes first");
  for (int j = 0; j < n_o_; ++j)
    if (mesh.outer_nodes[j] != N - n_o_ + j)
      fail(ErrorCode::GeometryError, "annulus mesh must order outer-boundary nodes last");

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.triangles.size() * 9);
  for (const auto& t : mesh.triangles) {
    Vec2 p0 = mesh.nodes[t[0]], p1 = mesh.nodes[t[1]], p2 = mesh.nodes[t[2]];
    double twoA = (p1 - p0).cross(p2 - p0);
    if (twoA <= 0) fail(ErrorCode::GeometryError, "degenerate or flipped triangle");
    double area = 0.5 * twoA;
    double rc = (p0.r + p1.r + p2.r) / 3.0;
    if (rc <= 0) fail(ErrorCode::GeometryError, "triangle centroid at r <= 0");
    // P1 gradients: grad phi_i = (b_i, c_i)
    double b[3] = {(p1.z - p2.z) / twoA, (p2.z - p0.z) / twoA, (p0.z - p1.z) / twoA};
    double c[3] = {(p2.r - p1.r) / twoA, (p0.r - p2.r) / twoA, (p1.r - p0.r) / twoA};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trips.emplace_back(t[i], t[j], area / rc * (b[i] * b[j] + c[i] * c[j]));
  }
  A_ = SpMat(N, N);
  A_.setFromTriplets(trips.begin(), trips.end());

  A_int_gi_ = sparse_block(A_, n_i_, n_int_, 0, n_i_);
  A_int_go_ = sparse_block(A_, n_i_, n_int_, N - n_o_, n_o_);
  A_dn_gi_ = sparse_block(A_, n_i_, n_int_ + n_o_, 0, n_i_);

  SpMat Add = sparse_block(A_, n_i_, n_int_, n_i_, n_int_);
  SpMat Adn = sparse_block(A_, n_i_, n_int_ + n_o_, n_i_, n_int_ + n_o_);
  dd_.compute(Add);
  if (dd_.info() != Eigen::Success)
    fail(ErrorCode::SingularMatrix, "Dirichlet stiffness factorization failed");
  dn_.compute(Adn);
  if (dn_.info() != Eigen::Success)
    fail(ErrorCode::SingularMatrix, "mixed stiffness factorization failed");
  pivot_dd_ = dd_.vectorD().minCoeff();
  pivot_dn_ = dn_.vectorD().minCoeff();
  if (pivot_dd_ <= 0 || pivot_dn_ <= 0)
    fail(ErrorCode::SingularMatrix, "stiffness factorization has nonpositive pivot");
}

Eigen::VectorXd FemSystem::solve_dirichlet(const Eigen::VectorXd& v,
                                           const Eigen::VectorXd& f) const {
  if (v.size() != n_i_ || f.size() != n_o_)
    fail(ErrorCode::DomainError, "solve_dirichlet: boundary vector lengths mismatch");
  Eigen::VectorXd rhs = -(A_int_gi_ * v) - (A_int_go_ * f);
  Eigen::VectorXd x_int = dd_.solve(rhs);
  Eigen::VectorXd full(n_i_ + n_int_ + n_o_);
  full.head(n_i_) = v;
  full.segment(n_i_, n_int_) = x_int;
  full.tail(n_o_) = f;
  return full;
}

namespace {
// Gauss-Legendre abscissae on [0, 1], weight 1/2 each.
constexpr double kGauss2[2] = {0.5 - 0.5 / 1.7320508075688772,
                               0.5 + 0.5 / 1.7320508075688772};
}  // namespace

std::vector<FluxSample> outer_flux_samples(const TriMesh& mesh) {
  std::vector<FluxSample> out;
  out.reserve(2 * mesh.outer_edges.size());
  for (const auto& e : mesh.outer_edges) {
    Vec2 pa = mesh.nodes[e[0]], pb = mesh.nodes[e[1]];
    Vec2 t = (pb - pa) / (pb - pa).norm();
    for (double s : kGauss2) out.push_back({pa + (pb - pa) * s, t});
  }
  return out;
}

Eigen::VectorXd FemSystem::outer_boundary_load(const TriMesh& mesh,
                                               const Eigen::VectorXd& g) const {
  if (g.size() != 2 * static_cast<int>(mesh.outer_edges.size()))
    fail(ErrorCode::DomainError, "outer_boundary_load: wrong g length");
  Eigen::VectorXd load = Eigen::VectorXd::Zero(n_o_);
  int base = n_i_ + n_int_;
  for (std::size_t k = 0; k < mesh.outer_edges.size(); ++k) {
    const auto& e = mesh.outer_edges[k];
    int ia = e[0] - base, ib = e[1] - base;
    double len = (mesh.nodes[e[0]] - mesh.nodes[e[1]]).norm();
    for (int q = 0; q < 2; ++q) {
      double s = kGauss2[q], gv = g[2 * k + q];
      load[ia] += 0.5 * len * gv * (1.0 - s);
      load[ib] += 0.5 * len * gv * s;
    }
  }
  return load;
}

Eigen::VectorXd FemSystem::solve_neumann(const TriMesh& mesh, const Eigen::VectorXd& v,
                                         const Eigen::VectorXd& g) const {
  if (v.size() != n_i_ || g.size() != 2 * static_cast<int>(mesh.outer_edges.size()))
    fail(ErrorCode::DomainError, "solve_neumann: boundary vector lengths mismatch");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_int_ + n_o_);
  rhs.tail(n_o_) = outer_boundary_load(mesh, g);
  rhs -= A_dn_gi_ * v;
  Eigen::VectorXd y = dn_.solve(rhs);
  Eigen::VectorXd full(n_i_ + n_int_ + n_o_);
  full.head(n_i_) = v;
  full.tail(n_int_ + n_o_) = y;
  return full;
}

// ---------------------------------------------------------------------------
// Control operator

ControlOperator::ControlOperator(const FemSystem& sys, const TriMesh& mesh, double eps)
    : eps_(eps) {
  if (eps <= 0) fail(ErrorCode::ConfigError, "regularization epsilon must be positive");
  int ni = sys.n_inner(), no = sys.n_outer();
  Eigen::VectorXd zero_f = Eigen::VectorXd::Zero(no);
  Eigen::VectorXd zero_g = Eigen::VectorXd::Zero(2 * mesh.outer_edges.size());
  Eigen::MatrixXd SD(ni, ni), SN(ni, ni);
  for (int j = 0; j < ni; ++j) {
    Eigen::VectorXd ej = Eigen::VectorXd::Zero(ni);
    ej[j] = 1.0;
    Eigen::VectorXd xd = sys.solve_dirichlet(ej, zero_f);
    Eigen::VectorXd xn = sys.solve_neumann(mesh, ej, zero_g);
    SD.col(j) = (sys.stiffness() * xd).head(ni);
    SN.col(j) = (sys.stiffness() * xn).head(ni);
  }
  SD_ = 0.5 * (SD + SD.transpose());
  Eigen::MatrixXd SNs = 0.5 * (SN + SN.transpose());
  S_ = (1.0 + eps_) * SD_ - SNs;
  factorize();
}

ControlOperator::ControlOperator(const FemSystem& sys, const TriMesh& mesh, double eps,
                                 Eigen::MatrixXd precomputed_S)
    : S_(std::move(precomputed_S)), eps_(eps) {
  if (eps <= 0) fail(ErrorCode::ConfigError, "regularization epsilon must be positive");
  int ni = sys.n_inner();
  if (S_.rows() != ni || S_.cols() != ni)
    fail(ErrorCode::CacheMismatch, "cached control operator has wrong dimensions");
  (void)mesh;
  factorize();
}

void ControlOperator::factorize() {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S_, Eigen::EigenvaluesOnly);
  min_eig_ = es.eigenvalues().minCoeff();
  if (min_eig_ <= 0.0)
    fail(ErrorCode::SingularControlSystem,
         "control operator is not positive definite (min eigenvalue " +
             std::to_string(min_eig_) + ")");
  llt_.compute(S_);
  if (llt_.info() != Eigen::Success)
    fail(ErrorCode::SingularControlSystem, "control operator factorization failed");
}

Eigen::VectorXd ControlOperator::solve(const Eigen::VectorXd& l) const {
  if (l.size() != S_.rows())
    fail(ErrorCode::DomainError, "control solve: wrong right-hand side length");
  return llt_.solve(l);
}

ControlRhs assemble_control_rhs(const FemSystem& sys, const TriMesh& mesh,
                                const Eigen::VectorXd& f, const Eigen::VectorXd& g) {
  int ni = sys.n_inner();
  Eigen::VectorXd zero_v = Eigen::VectorXd::Zero(ni);
  ControlRhs rhs;
  rhs.lift_d = sys.solve_dirichlet(zero_v, f);
  rhs.lift_n = sys.solve_neumann(mesh, zero_v, g);
  Eigen::VectorXd d = rhs.lift_d - rhs.lift_n;
  Eigen::VectorXd Ad = sys.stiffness() * d;
  rhs.l = -Ad.head(ni);
  rhs.data_constant = 0.5 * d.dot(Ad);
  return rhs;
}

ControlSolution solve_control(const ControlOperator& op, const ControlRhs& rhs) {
  ControlSolution sol;
  sol.u = op.solve(rhs.l);
  sol.data_constant = rhs.data_constant;
  double quad = 0.5 * sol.u.dot(op.S() * sol.u);
  double lin = rhs.l.dot(sol.u);
  sol.j_total = quad - lin + rhs.data_constant;
  sol.j_regularization = 0.5 * op.epsilon() * sol.u.dot(op.S_D() * sol.u);
  sol.j_misfit = sol.j_total - sol.j_regularization;
  double ln = rhs.l.norm();
  sol.residual = ln > 0 ? (op.S() * sol.u - rhs.l).norm() / ln : 0.0;
  return sol;
}

// ---------------------------------------------------------------------------
// FemField

FemField::FemField(const TriMesh* mesh, Eigen::VectorXd values)
    : mesh_(mesh), values_(std::move(values)) {
  if (values_.size() != mesh_->n_nodes())
    fail(ErrorCode::DomainError, "field values length does not match the mesh");
  Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
  for (const auto& p : mesh_->nodes) {
    lo.r = std::min(lo.r, p.r);
    lo.z = std::min(lo.z, p.z);
    hi.r = std::max(hi.r, p.r);
    hi.z = std::max(hi.z, p.z);
  }
  double span = std::max(hi.r - lo.r, hi.z - lo.z);
  int target = std::max(8, static_cast<int>(std::sqrt(mesh_->n_triangles() / 2.0)));
  cell_ = span / target;
  lo_ = lo;
  nx_ = static_cast<int>((hi.r - lo.r) / cell_) + 2;
  ny_ = static_cast<int>((hi.z - lo.z) / cell_) + 2;
  bins_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  for (int t = 0; t < mesh_->n_triangles(); ++t) {
    const auto& tri = mesh_->triangles[t];
    double rmin = 1e300, rmax = -1e300, zmin = 1e300, zmax = -1e300;
    for (int k = 0; k < 3; ++k) {
      Vec2 p = mesh_->nodes[tri[k]];
      rmin = std::min(rmin, p.r);
      rmax = std::max(rmax, p.r);
      zmin = std::min(zmin, p.z);
      zmax = std::max(zmax, p.z);
    }
    int i0 = std::clamp(static_cast<int>((rmin - lo_.r) / cell_), 0, nx_ - 1);
    int i1 = std::clamp(static_cast<int>((rmax - lo_.r) / cell_), 0, nx_ - 1);
    int j0 = std::clamp(static_cast<int>((zmin - lo_.z) / cell_), 0, ny_ - 1);
    int j1 = std::clamp(static_cast<int>((zmax - lo_.z) / cell_), 0, ny_ - 1);
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) bins_[static_cast<std::size_t>(j) * nx_ + i].push_back(t);
  }
}

std::optional<int> FemField::find_triangle(Vec2 p) const {
  int i = static_cast<int>((p.r - lo_.r) / cell_);
  int j = static_cast<int>((p.z - lo_.z) / cell_);
  if (i < 0 || i >= nx_ || j < 0 || j >= ny_) return std::nullopt;
  for (int t : bins_[static_cast<std::size_t>(j) * nx_ + i]) {
    const auto& tri = mesh_->triangles[t];
    Vec2 a = mesh_->nodes[tri[0]], b = mesh_->nodes[tri[1]], c = mesh_->nodes[tri[2]];
    double twoA = (b - a).cross(c - a);
    double w0 = (b - p).cross(c - p) / twoA;
    double w1 = (c - p).cross(a - p) / twoA;
    double w2 = (a - p).cross(b - p) / twoA;
    if (w0 >= -1e-10 && w1 >= -1e-10 && w2 >= -1e-10) return t;
  }
  return std::nullopt;
}

std::optional<double> FemField::try_eval(Vec2 p) const {
  auto t = find_triangle(p);
  if (!t) return std::nullopt;
  const auto& tri = mesh_->triangles[*t];
  Vec2 a = mesh_->nodes[tri[0]], b = mesh_->nodes[tri[1]], c = mesh_->nodes[tri[2]];
  double twoA = (b - a).cross(c - a);
  double w0 = (b - p).cross(c - p) / twoA;
  double w1 = (c - p).cross(a - p) / twoA;
  double w2 = (a - p).cross(b - p) / twoA;
  return w0 * values_[tri[0]] + w1 * values_[tri[1]] + w2 * values_[tri[2]];
}

double FemField::eval(Vec2 p) const {
  auto v = try_eval(p);
  if (!v) fail(ErrorCode::DomainError, "field evaluation outside the mesh");
  return *v;
}

// ---------------------------------------------------------------------------
// Mesh bank

const BankEntry& MeshBank::select(const CurrentCenter& cc) const {
  if (entries.empty()) fail(ErrorCode::EmptyBank, "mesh bank has no entries");
  const BankEntry* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& e : entries) {
    double d = (e->inner.center - Vec2{cc.r_c, cc.z_c}).norm();
    if (d < best_d) {
      best_d = d;
      best = e.get();
    }
  }
  return *best;
}

MeshBank build_mesh_bank(const Contour& gamma_o, const std::vector<Vec2>& centers,
                         double radius, double h, double eps,
                         const std::vector<RefineZone>& zones) {
  if (centers.empty()) fail(ErrorCode::EmptyBank, "mesh bank needs at least one center");
  MeshBank bank;
  bank.h = h;
  bank.epsilon = eps;
  for (Vec2 c : centers) {
    auto e = std::make_unique<BankEntry>();
    e->inner = InnerBoundary{c, radius, radius};
    e->mesh = build_annulus_mesh(gamma_o, e->inner, h, zones);
    e->sys = std::make_unique<FemSystem>(e->mesh);
    e->control = std::make_unique<ControlOperator>(*e->sys, e->mesh, eps);
    e->outer_contour = Contour::from_points(e->mesh.outer_polyline());
    bank.entries.push_back(std::move(e));
  }
  return bank;
}

}  // namespace torflux
