#include "torflux/th_fit.hpp"

#include <cmath>

#include "torflux/errors.hpp"

namespace torflux {

std::vector<Vec2> SensorSet::positions() const {
  std::vector<Vec2> out;
  out.reserve(probes.size() + flux_loops.size() + 2 * saddle_loops.size());
  for (const auto& p : probes) out.push_back(p.pos);
  for (const auto& f : flux_loops) out.push_back(f.pos);
  for (const auto& s : saddle_loops) {
    out.push_back(s.pos_a);
    out.push_back(s.pos_b);
  }
  return out;
}

Eigen::MatrixXd build_design_matrix(const SensorSet& sensors, const Weights& w,
                                    ToroidalPole pole, int n_e, int n_i) {
  if (w.sigma_b <= 0 || w.sigma_f <= 0 || w.sigma_s <= 0)
    fail(ErrorCode::ConfigError, "measurement weights must be positive");
  int dim = harmonic_dim(n_e, n_i);
  int nb = static_cast<int>(sensors.probes.size());
  int nf = static_cast<int>(sensors.flux_loops.size());
  int ns = static_cast<int>(sensors.saddle_loops.size());
  Eigen::MatrixXd M(nb + nf + ns, dim);
  for (int i = 0; i < nb; ++i) {
    const auto& pr = sensors.probes[i];
    HarmonicBasis b = eval_basis(pole, n_e, n_i, pr.pos);
    for (int j = 0; j < dim; ++j) {
      // B . dir with B = (-(1/r) dpsi/dz, (1/r) dpsi/dr)
      double bdir = (-b.grad[j].z * pr.dir.r + b.grad[j].r * pr.dir.z) / pr.pos.r;
      M(i, j) = bdir / w.sigma_b;
    }
  }
  for (int i = 0; i < nf; ++i) {
    HarmonicBasis b = eval_basis(pole, n_e, n_i, sensors.flux_loops[i].pos);
    for (int j = 0; j < dim; ++j) M(nb + i, j) = b.psi[j] / w.sigma_f;
  }
  for (int i = 0; i < ns; ++i) {
    HarmonicBasis ba = eval_basis(pole, n_e, n_i, sensors.saddle_loops[i].pos_a);
    HarmonicBasis bb = eval_basis(pole, n_e, n_i, sensors.saddle_loops[i].pos_b);
    for (int j = 0; j < dim; ++j) M(nb + nf + i, j) = (ba.psi[j] - bb.psi[j]) / w.sigma_s;
  }
  return M;
}

MeasurementSet subtract_coil_contributions(const MeasurementSet& m, const SensorSet& sensors,
                                           const CoilSet& coils,
                                           const std::map<std::string, double>& currents) {
  CoilSet scaled = coils.scaled_by(currents);
  MeasurementSet out = m;
  int nb = static_cast<int>(sensors.probes.size());
  int nf = static_cast<int>(sensors.flux_loops.size());
  int ns = static_cast<int>(sensors.saddle_loops.size());
  if (m.b.size() != nb || m.f.size() != nf || m.s.size() != ns)
    fail(ErrorCode::ConfigError, "measurement vector lengths do not match the sensor set");
  for (int i = 0; i < nb; ++i) {
    Vec2 B = B_coils(scaled, sensors.probes[i].pos);
    out.b[i] -= B.dot(sensors.probes[i].dir);
  }
  for (int i = 0; i < nf; ++i) out.f[i] -= psi_coils(scaled, sensors.flux_loops[i].pos);
  for (int i = 0; i < ns; ++i)
    out.s[i] -= psi_coils(scaled, sensors.saddle_loops[i].pos_a) -
                psi_coils(scaled, sensors.saddle_loops[i].pos_b);
  return out;
}

void check_pole_in_hull(ToroidalPole pole, const SensorSet& sensors) {
  std::vector<Vec2> hull = convex_hull(sensors.positions());
  if (!point_in_polygon({pole.r0, pole.z0}, hull))
    fail(ErrorCode::PoleOutsideHull, "expansion pole lies outside the sensor hull");
}

FitResult fit_coefficients(const SensorSet& sensors, const MeasurementSet& plasma_only,
                           const Weights& w, ToroidalPole pole, int n_e, int n_i,
                           double cond_limit) {
  check_pole_in_hull(pole, sensors);
  Eigen::MatrixXd M = build_design_matrix(sensors, w, pole, n_e, n_i);
  int dim = harmonic_dim(n_e, n_i);
  if (M.rows() < dim)
    fail(ErrorCode::RankDeficient, "fewer measurements than coefficients");

  int nb = static_cast<int>(sensors.probes.size());
  int nf = static_cast<int>(sensors.flux_loops.size());
  int ns = static_cast<int>(sensors.saddle_loops.size());
  Eigen::VectorXd y(nb + nf + ns);
  for (int i = 0; i < nb; ++i) y[i] = plasma_only.b[i] / w.sigma_b;
  for (int i = 0; i < nf; ++i) y[nb + i] = plasma_only.f[i] / w.sigma_f;
  for (int i = 0; i < ns; ++i) y[nb + nf + i] = plasma_only.s[i] / w.sigma_s;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  Eigen::VectorXd rdiag = qr.matrixR().diagonal().cwiseAbs();
  double cond = rdiag.maxCoeff() / std::max(rdiag.minCoeff(), 1e-300);
  int rank = static_cast<int>(qr.rank());
  if (rank < dim || cond > cond_limit)
    fail(ErrorCode::RankDeficient,
         "weighted least-squares system is rank deficient (rank " + std::to_string(rank) +
             " of " + std::to_string(dim) + ", cond ~ " + std::to_string(cond) + ")");
  Eigen::VectorXd u = qr.solve(y);

  FitResult res;
  res.coeffs = HarmonicCoeffs::from_vector(pole, n_e, n_i, u);
  res.cond = cond;
  res.rank = rank;
  Eigen::VectorXd r = M * u - y;
  auto rms = [&](int off, int n, double sigma) {
    return n > 0 ? sigma * std::sqrt(r.segment(off, n).squaredNorm() / n) : 0.0;
  };
  res.rms_b = rms(0, nb, w.sigma_b);
  res.rms_f = rms(nb, nf, w.sigma_f);
  res.rms_s = rms(nb + nf, ns, w.sigma_s);
  return res;
}

CauchyData eval_cauchy_scaled(const HarmonicCoeffs& c, const CoilSet& coils_scaled,
                              const Contour& gamma) {
  CauchyData cd;
  cd.contour = gamma;
  int n = static_cast<int>(gamma.size());
  cd.f.resize(n);
  cd.g.resize(n);
  for (int i = 0; i < n; ++i) {
    Vec2 p = gamma.points[i];
    double psi = eval_psi_th(c, p) + psi_coils(coils_scaled, p);
    Vec2 B = eval_B_th(c, p) + B_coils(coils_scaled, p);
    cd.f[i] = psi;
    // (1/r) dpsi/dn along the outward normal equals B . tangent (CCW).
    cd.g[i] = B.dot(gamma.tangent[i]);
  }
  return cd;
}

CauchyData eval_cauchy(const HarmonicCoeffs& c, const CoilSet& coils,
                       const std::map<std::string, double>& currents, const Contour& gamma) {
  return eval_cauchy_scaled(c, coils.scaled_by(currents), gamma);
}

Eigen::VectorXd eval_tangential_field(const HarmonicCoeffs& c, const CoilSet& coils_scaled,
                                      const std::vector<FluxSample>& samples) {
  Eigen::VectorXd g(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Vec2 B = eval_B_th(c, samples[i].p) + B_coils(coils_scaled, samples[i].p);
    g[i] = B.dot(samples[i].t);
  }
  return g;
}

CurrentCenter current_center(const CauchyData& cd, double min_current) {
  const Contour& ct = cd.contour;
  int n = static_cast<int>(ct.size());
  if (n < 8) fail(ErrorCode::GeometryError, "current_center: contour too coarse");

  // B_n = -(1/r) df/ds; df/ds from 5-point arc-length finite differences.
  Eigen::VectorXd bn(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> s(5), fv(5);
    for (int k = -2; k <= 2; ++k) {
      int j = (i + k + n) % n;
      double sj = ct.arclen[j];
      // unwrap arc length around the seam
      if (k < 0 && j > i) sj -= ct.length;
      if (k > 0 && j < i) sj += ct.length;
      s[k + 2] = sj;
      fv[k + 2] = cd.f[j];
    }
    std::vector<double> wgt = fd_weights(ct.arclen[i], s, 1);
    double dfds = 0.0;
    for (int k = 0; k < 5; ++k) dfds += wgt[k] * fv[k];
    bn[i] = -dfds / ct.points[i].r;
  }

  // Trapezoidal closed-contour quadrature with per-vertex ds.
  auto integrate = [&](auto f) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      int ip = (i + 1) % n;
      double ds = (ct.points[ip] - ct.points[i]).norm();
      acc += 0.5 * ds * (f(i) + f(ip));
    }
    return acc;
  };
  double ip_int = integrate([&](int i) { return cd.g[i]; });
  double zc_int = integrate([&](int i) {
    double r = ct.points[i].r, z = ct.points[i].z;
    return z * cd.g[i] + r * std::log(r) * bn[i];
  });
  double rc2_int = integrate([&](int i) {
    double r = ct.points[i].r, z = ct.points[i].z;
    return r * r * cd.g[i] - 2.0 * r * z * bn[i];
  });

  CurrentCenter cc;
  cc.i_p = -ip_int / MU0;
  if (std::abs(cc.i_p) < min_current)
    fail(ErrorCode::ZeroCurrent, "net plasma current below threshold, centroid undefined");
  cc.z_c = (-zc_int / MU0) / cc.i_p;
  double rc2 = (-rc2_int / MU0) / cc.i_p;
  if (rc2 <= 0.0)
    fail(ErrorCode::ZeroCurrent, "nonpositive r_c^2 moment, centroid undefined");
  cc.r_c = std::sqrt(rc2);
  return cc;
}

Contour build_gamma_o(const SensorSet& sensors, double offset, int n) {
  std::vector<Vec2> hull = convex_hull(sensors.positions());
  std::vector<Vec2> inner = offset_convex_inward(hull, offset);
  return Contour::from_points(resample_closed(inner, n));
}

}  // namespace torflux
