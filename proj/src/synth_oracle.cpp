#include "torflux/synth_oracle.hpp"

#include <cmath>

#include "torflux/errors.hpp"

namespace torflux {

namespace {
constexpr double PI = 3.14159265358979323846;
}

double GaussianRng::uniform() {
  // 53-bit mantissa in (0, 1]: never returns 0, safe for log().
  return (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
}

double GaussianRng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform(), u2 = uniform();
  double m = std::sqrt(-2.0 * std::log(u1));
  spare_ = m * std::sin(2.0 * PI * u2);
  have_spare_ = true;
  return m * std::cos(2.0 * PI * u2);
}

std::vector<Filament> dshape_filaments(Vec2 axis, double minor_radius, double elongation,
                                       double triangularity, int n_rings,
                                       double total_current) {
  if (minor_radius <= 0 || elongation <= 0 || n_rings < 1)
    fail(ErrorCode::ConfigError, "dshape_filaments: invalid shape parameters");
  if (std::abs(triangularity) >= 1)
    fail(ErrorCode::ConfigError, "dshape_filaments: |triangularity| must be < 1");
  double dtri = std::asin(triangularity);
  std::vector<Filament> fs;
  std::vector<double> w;
  fs.push_back({axis.r, axis.z, 0.0});
  w.push_back(1.0);
  for (int k = 1; k <= n_rings; ++k) {
    double rho = static_cast<double>(k) / n_rings * 0.9;  // stay inside the surface
    int m = 6 * k;
    for (int j = 0; j < m; ++j) {
      double th = 2.0 * PI * j / m;
      double r = axis.r + minor_radius * rho * std::cos(th + dtri * rho * std::sin(th));
      double z = axis.z + elongation * minor_radius * rho * std::sin(th);
      fs.push_back({r, z, 0.0});
      w.push_back(std::max(1.0 - rho * rho, 0.0));
    }
  }
  double wsum = 0.0;
  for (double x : w) wsum += x;
  for (std::size_t i = 0; i < fs.size(); ++i) fs[i].current = total_current * w[i] / wsum;
  return fs;
}

double psi_total(const SyntheticEquilibrium& eq, Vec2 p) {
  double v = psi_filaments(eq.plasma, p);
  if (!eq.coils.filaments.empty())
    v += psi_coils(eq.coils.scaled_by(eq.coil_currents), p);
  return v;
}

Vec2 B_total(const SyntheticEquilibrium& eq, Vec2 p) {
  Vec2 b = B_filaments(eq.plasma, p);
  if (!eq.coils.filaments.empty())
    b += B_coils(eq.coils.scaled_by(eq.coil_currents), p);
  return b;
}

MeasurementSet generate_measurements(const SyntheticEquilibrium& eq, const SensorSet& sensors) {
  CoilSet scaled;
  bool with_coils = !eq.coils.filaments.empty();
  if (with_coils) scaled = eq.coils.scaled_by(eq.coil_currents);
  auto psi_at = [&](Vec2 p) {
    return psi_filaments(eq.plasma, p) + (with_coils ? psi_coils(scaled, p) : 0.0);
  };
  auto b_at = [&](Vec2 p) {
    Vec2 b = B_filaments(eq.plasma, p);
    if (with_coils) b += B_coils(scaled, p);
    return b;
  };

  MeasurementSet m;
  m.b.resize(sensors.probes.size());
  m.f.resize(sensors.flux_loops.size());
  m.s.resize(sensors.saddle_loops.size());
  for (std::size_t i = 0; i < sensors.probes.size(); ++i)
    m.b[i] = b_at(sensors.probes[i].pos).dot(sensors.probes[i].dir);
  for (std::size_t i = 0; i < sensors.flux_loops.size(); ++i)
    m.f[i] = psi_at(sensors.flux_loops[i].pos);
  for (std::size_t i = 0; i < sensors.saddle_loops.size(); ++i)
    m.s[i] = psi_at(sensors.saddle_loops[i].pos_a) - psi_at(sensors.saddle_loops[i].pos_b);

  if (eq.noise.sigma_b > 0 || eq.noise.sigma_f > 0 || eq.noise.sigma_s > 0) {
    GaussianRng rng(eq.seed);
    for (int i = 0; i < m.b.size(); ++i) m.b[i] += eq.noise.sigma_b * rng.normal();
    for (int i = 0; i < m.f.size(); ++i) m.f[i] += eq.noise.sigma_f * rng.normal();
    for (int i = 0; i < m.s.size(); ++i) m.s[i] += eq.noise.sigma_s * rng.normal();
  }
  return m;
}

TriMesh grid_mesh(Vec2 lo, Vec2 hi, double h) {
  if (h <= 0 || hi.r <= lo.r || hi.z <= lo.z)
    fail(ErrorCode::ConfigError, "grid_mesh: invalid extent or spacing");
  if (lo.r <= 0) fail(ErrorCode::GeometryError, "grid_mesh: region must have r > 0");
  int nx = std::max(2, static_cast<int>(std::ceil((hi.r - lo.r) / h))) + 1;
  int nz = std::max(2, static_cast<int>(std::ceil((hi.z - lo.z) / h))) + 1;
  TriMesh mesh;
  mesh.nodes.reserve(static_cast<std::size_t>(nx) * nz);
  for (int j = 0; j < nz; ++j)
    for (int i = 0; i < nx; ++i)
      mesh.nodes.push_back({lo.r + (hi.r - lo.r) * i / (nx - 1.0),
                            lo.z + (hi.z - lo.z) * j / (nz - 1.0)});
  auto id = [nx](int i, int j) { return j * nx + i; };
  for (int j = 0; j + 1 < nz; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      if ((i + j) % 2 == 0) {
        mesh.triangles.push_back({a, b, c});
        mesh.triangles.push_back({a, c, d});
      } else {
        mesh.triangles.push_back({a, b, d});
        mesh.triangles.push_back({b, c, d});
      }
    }
  for (int i = 0; i < nx; ++i) {
    mesh.outer_nodes.push_back(id(i, 0));
    mesh.outer_nodes.push_back(id(i, nz - 1));
  }
  for (int j = 1; j + 1 < nz; ++j) {
    mesh.outer_nodes.push_back(id(0, j));
    mesh.outer_nodes.push_back(id(nx - 1, j));
  }
  return mesh;
}

ReferenceBoundary reference_boundary(const SyntheticEquilibrium& eq, const Contour& limiter,
                                     double grid_h) {
  Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
  for (const auto& p : limiter.points) {
    lo.r = std::min(lo.r, p.r);
    lo.z = std::min(lo.z, p.z);
    hi.r = std::max(hi.r, p.r);
    hi.z = std::max(hi.z, p.z);
  }
  double margin = 4.0 * grid_h;
  lo -= Vec2{margin, margin};
  hi += Vec2{margin, margin};
  lo.r = std::max(lo.r, 1e-3);

  TriMesh mesh = grid_mesh(lo, hi, grid_h);
  Eigen::VectorXd psi(mesh.n_nodes());
  CoilSet scaled;
  bool with_coils = !eq.coils.filaments.empty();
  if (with_coils) scaled = eq.coils.scaled_by(eq.coil_currents);
  for (int i = 0; i < mesh.n_nodes(); ++i) {
    Vec2 p = mesh.nodes[i];
    double v;
    try {
      v = psi_filaments(eq.plasma, p);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::FilamentSingularity) throw;
      // Grid node exactly on a plasma filament: the flux is singular there.
      // Sample a nudged point instead; such a node sits deep inside the
      // plasma, far above any boundary level, so the contour is unaffected.
      p += Vec2{0.125 * grid_h, 0.125 * grid_h};
      v = psi_filaments(eq.plasma, p);
    }
    if (with_coils) v += psi_coils(scaled, p);
    psi[i] = v;
  }
  FemField field(&mesh, std::move(psi));

  double ip = 0.0;
  Vec2 centroid{};
  for (const auto& f : eq.plasma) {
    ip += f.current;
    centroid += Vec2{f.r, f.z} * f.current;
  }
  if (std::abs(ip) < 1.0)
    fail(ErrorCode::ZeroCurrent, "reference_boundary: zero net plasma current");
  centroid = centroid / ip;

  // Saddles from the discrete field, polished by Newton on the exact field
  // (finite-difference Jacobian of the exact B = rotated grad psi / r).
  std::vector<SaddlePoint> saddles = find_xpoints(field);
  for (auto& s : saddles) {
    Vec2 x = s.pos;
    double fd = 1e-5;
    for (int it = 0; it < 30; ++it) {
      auto grad = [&](Vec2 p) {
        Vec2 b = B_total(eq, p);
        return Vec2{b.z * p.r, -b.r * p.r};  // (dpsi/dr, dpsi/dz)
      };
      Vec2 g = grad(x);
      Vec2 gr = (grad({x.r + fd, x.z}) - grad({x.r - fd, x.z})) / (2 * fd);
      Vec2 gz = (grad({x.r, x.z + fd}) - grad({x.r, x.z - fd})) / (2 * fd);
      double det = gr.r * gz.z - gz.r * gr.z;
      if (std::abs(det) < 1e-300) break;
      Vec2 step{(-g.r * gz.z + g.z * gz.r) / det, (-g.z * gr.r + g.r * gr.z) / det};
      x += step;
      if (step.norm() < 1e-12) break;
    }
    if ((x - s.pos).norm() < 4.0 * grid_h) {
      s.pos = x;
      s.psi = psi_total(eq, x);
    }
  }

  // A plasma made of discrete filaments has real saddles wedged between
  // neighbouring filaments; a fine grid resolves them, but they say nothing
  // about the ideal smooth plasma this bundle stands in for (and they would
  // break self-convergence under grid refinement). A physical X-point lies
  // outside the current-carrying region, so drop saddles inside or hugging
  // the convex hull of the plasma filaments.
  std::vector<Vec2> fil;
  fil.reserve(eq.plasma.size());
  for (const auto& f : eq.plasma) fil.push_back({f.r, f.z});
  std::vector<Vec2> hull = fil.size() >= 3 ? convex_hull(fil) : fil;
  std::erase_if(saddles, [&](const SaddlePoint& s) {
    // A sparse pair of current channels has a genuine X between them; only a
    // hull with interior marks a bundle standing in for one smooth channel.
    if (hull.size() < 3) return false;
    if (point_in_polygon(s.pos, hull)) return true;
    return point_polyline_distance(s.pos, hull) <= 2.0 * grid_h;
  });

  CurrentCenter cc{centroid.r, centroid.z, ip};
  PlasmaBoundary pb = extract_boundary(field, limiter, cc, saddles);
  ReferenceBoundary rb;
  rb.points = std::move(pb.points);
  rb.psi_b = pb.psi_b;
  rb.kind = pb.kind;
  rb.xpoint = pb.xpoint;
  return rb;
}

}  // namespace torflux
