#include "torflux/toroidal_harmonics.hpp"

#include <cmath>

#include "torflux/errors.hpp"
#include "torflux/magnetostatics.hpp"

namespace torflux {

namespace {
constexpr double PI = 3.14159265358979323846;
}

ToroidalCoords to_toroidal(Vec2 p, ToroidalPole pole) {
  if (p.r <= 0.0) fail(ErrorCode::AxisDomain, "to_toroidal: point has r <= 0");
  if (pole.r0 <= 0.0) fail(ErrorCode::DomainError, "to_toroidal: pole has r0 <= 0");
  double dz = p.z - pole.z0;
  double dist2 = (p.r - pole.r0) * (p.r - pole.r0) + dz * dz;
  if (dist2 < 1e-24) fail(ErrorCode::PoleSingularity, "to_toroidal: point at the pole");
  double d1 = std::sqrt((p.r + pole.r0) * (p.r + pole.r0) + dz * dz);
  double d2 = std::sqrt(dist2);
  ToroidalCoords c;
  c.zeta = std::log(d1 / d2);
  double ce = (d1 * d1 + d2 * d2 - 4.0 * pole.r0 * pole.r0) / (2.0 * d1 * d2);
  double se = 2.0 * pole.r0 * dz / (d1 * d2);
  c.eta = std::atan2(se, ce);
  if (c.eta < 0.0) c.eta += 2.0 * PI;
  return c;
}

Vec2 from_toroidal(ToroidalCoords c, ToroidalPole pole) {
  double d = std::cosh(c.zeta) - std::cos(c.eta);
  if (d <= 0.0) fail(ErrorCode::DomainError, "from_toroidal: degenerate coordinates");
  return {pole.r0 * std::sinh(c.zeta) / d, pole.z0 + pole.r0 * std::sin(c.eta) / d};
}

namespace {

// Order-1 seeds T_0 = f^1_{-1/2}(x) and T_1 = f^1_{1/2}(x) for both families,
// from complete elliptic integrals and the order-raising relation
// f^1_nu = nu (x f_nu - f_{nu-1}) / sqrt(x^2 - 1) with f_{-3/2} = f_{1/2}.
struct Seeds {
  double p0, p1, q0, q1;
};

Seeds order1_seeds(double x) {
  double s = std::sqrt((x - 1.0) * (x + 1.0));
  double m = 2.0 / (x + 1.0);
  double mp = (x - 1.0) / (x + 1.0);
  auto [Km, Em] = ellip_KE(m);
  auto [Kp, Ep] = ellip_KE(mp);
  double k = std::sqrt(m);
  double Q_m = k * Km;                                             // Q_{-1/2}
  double Q_p = k * (x * Km - (x + 1.0) * Em);                      // Q_{1/2}
  double P_m = (2.0 / PI) * k * Kp;                                // P_{-1/2}
  double P_p = (2.0 / PI) * (std::sqrt(2.0 * (x + 1.0)) * Ep - k * Kp);  // P_{1/2}
  Seeds out;
  out.p0 = -0.5 * (x * P_m - P_p) / s;  // nu = -1/2, f_{nu-1} = f_{-3/2} = f_{1/2}
  out.p1 = 0.5 * (x * P_p - P_m) / s;   // nu = +1/2
  out.q0 = -0.5 * (x * Q_m - Q_p) / s;
  out.q1 = 0.5 * (x * Q_p - Q_m) / s;
  return out;
}

// d/dx T_n from (x^2-1) T'_n = (n-1/2) x T_n - (n+1/2) T_{n-1},
// where T_{-1} (degree -3/2) equals T_1 (degree +1/2) by reflection.
void fill_derivatives(const std::vector<double>& t, std::vector<double>& dt, double x) {
  double s2 = (x - 1.0) * (x + 1.0);
  int n_max = static_cast<int>(t.size()) - 1;
  for (int n = 0; n <= n_max; ++n) {
    double prev = (n == 0) ? t[std::min(1, n_max)] : t[n - 1];
    dt[n] = ((n - 0.5) * x * t[n] - (n + 0.5) * prev) / s2;
  }
}

}  // namespace

LegendreTable legendre_half_table(int n_max, double x) {
  if (n_max < 0 || n_max > MAX_HARMONIC_ORDER)
    fail(ErrorCode::DomainError, "legendre_half_table: order out of range");
  if (!(x > 1.0 + 1e-14))
    fail(ErrorCode::DomainError, "legendre_half_table: argument must satisfy x > 1");
  if (x > 1e15)
    fail(ErrorCode::DomainError, "legendre_half_table: argument too large");

  LegendreTable tab;
  int sz = std::max(n_max + 1, 2);
  tab.p.assign(sz, 0.0);
  tab.q.assign(sz, 0.0);
  Seeds sd = order1_seeds(x);
  tab.p[0] = sd.p0;
  tab.p[1] = sd.p1;
  tab.q[0] = sd.q0;
  tab.q[1] = sd.q1;

  // Degree recurrence (n-1/2) T_{n+1} = 2 n x T_n - (n+1/2) T_{n-1}.
  // P^1 is the dominant family in n: forward recurrence is stable.
  for (int n = 1; n < n_max; ++n)
    tab.p[n + 1] = (2.0 * n * x * tab.p[n] - (n + 0.5) * tab.p[n - 1]) / (n - 0.5);

  double zeta = std::log(x + std::sqrt((x - 1.0) * (x + 1.0)));
  if (zeta < 0.35 || n_max < 2) {
    // Q^1 decays like e^{-n zeta}: forward amplification of the dominant
    // solution is bounded by e^{2 n_max zeta} <= e^{8.4}, still accurate.
    for (int n = 1; n < n_max; ++n)
      tab.q[n + 1] = (2.0 * n * x * tab.q[n] - (n + 0.5) * tab.q[n - 1]) / (n - 0.5);
  } else {
    // Miller backward recurrence for the minimal family: start above n_max
    // with a trial pair, recur down, normalize on the exact n = 0 seed.
    int buffer = static_cast<int>(std::ceil(20.0 / zeta)) + 5;
    int start = n_max + buffer;
    std::vector<double> v(start + 2, 0.0);
    v[start + 1] = 0.0;
    v[start] = 1.0;
    for (int n = start; n >= 1; --n) {
      v[n - 1] = (2.0 * n * x * v[n] - (n - 0.5) * v[n + 1]) / (n + 0.5);
      if (std::abs(v[n - 1]) > 1e250) {
        for (int k = n - 1; k <= start + 1; ++k) v[k] *= 1e-250;
      }
    }
    double scale = sd.q0 / v[0];
    for (int n = 0; n <= n_max; ++n) tab.q[n] = v[n] * scale;
    tab.q[0] = sd.q0;
    if (n_max >= 1) tab.q[1] = sd.q1;
  }

  tab.p.resize(n_max + 1);
  tab.q.resize(n_max + 1);
  tab.dp.assign(n_max + 1, 0.0);
  tab.dq.assign(n_max + 1, 0.0);
  // Derivative relation needs the degree +1/2 value for n = 0; keep it handy.
  if (n_max == 0) {
    std::vector<double> p2{tab.p[0], sd.p1}, q2{tab.q[0], sd.q1};
    std::vector<double> dp2(2), dq2(2);
    fill_derivatives(p2, dp2, x);
    fill_derivatives(q2, dq2, x);
    tab.dp[0] = dp2[0];
    tab.dq[0] = dq2[0];
  } else {
    fill_derivatives(tab.p, tab.dp, x);
    fill_derivatives(tab.q, tab.dq, x);
  }

  for (double v : tab.p)
    if (!std::isfinite(v)) tab.overflow = true;
  for (double v : tab.q)
    if (!std::isfinite(v)) tab.overflow = true;
  return tab;
}

HarmonicCoeffs HarmonicCoeffs::zeros(ToroidalPole pole, int n_e, int n_i) {
  if (n_e < 0 || n_i < 0 || n_e > MAX_HARMONIC_ORDER || n_i > MAX_HARMONIC_ORDER)
    fail(ErrorCode::DomainError, "harmonic truncation order out of range");
  HarmonicCoeffs c;
  c.pole = pole;
  c.n_e = n_e;
  c.n_i = n_i;
  c.a_e.assign(n_e + 1, 0.0);
  c.b_e.assign(n_e, 0.0);
  c.a_i.assign(n_i + 1, 0.0);
  c.b_i.assign(n_i, 0.0);
  return c;
}

HarmonicCoeffs HarmonicCoeffs::from_vector(ToroidalPole pole, int n_e, int n_i,
                                           const Eigen::VectorXd& u) {
  HarmonicCoeffs c = zeros(pole, n_e, n_i);
  if (u.size() != c.dim())
    fail(ErrorCode::DomainError, "coefficient vector has wrong length");
  int k = 0;
  for (int n = 0; n <= n_e; ++n) c.a_e[n] = u[k++];
  for (int n = 1; n <= n_e; ++n) c.b_e[n - 1] = u[k++];
  for (int n = 0; n <= n_i; ++n) c.a_i[n] = u[k++];
  for (int n = 1; n <= n_i; ++n) c.b_i[n - 1] = u[k++];
  return c;
}

Eigen::VectorXd HarmonicCoeffs::to_vector() const {
  Eigen::VectorXd u(dim());
  int k = 0;
  for (int n = 0; n <= n_e; ++n) u[k++] = a_e[n];
  for (int n = 1; n <= n_e; ++n) u[k++] = b_e[n - 1];
  for (int n = 0; n <= n_i; ++n) u[k++] = a_i[n];
  for (int n = 1; n <= n_i; ++n) u[k++] = b_i[n - 1];
  return u;
}

namespace {

// Shared geometric factors at one evaluation point.
struct EvalFrame {
  double C, S, ce, se, D;       // cosh, sinh, cos, sin, cosh - cos
  double pref, dpref_dz, dpref_de;
  double dzeta_dr, dzeta_dz, deta_dr, deta_dz;
  LegendreTable tab;
};

EvalFrame make_frame(ToroidalPole pole, int n_max, Vec2 p) {
  ToroidalCoords tc = to_toroidal(p, pole);
  EvalFrame f;
  f.C = std::cosh(tc.zeta);
  f.S = std::sinh(tc.zeta);
  f.ce = std::cos(tc.eta);
  f.se = std::sin(tc.eta);
  f.D = f.C - f.ce;
  double sqD = std::sqrt(f.D);
  f.pref = pole.r0 * f.S / sqD;
  f.dpref_dz = pole.r0 * (f.C / sqD - f.S * f.S / (2.0 * f.D * sqD));
  f.dpref_de = -pole.r0 * f.S * f.se / (2.0 * f.D * sqD);
  f.dzeta_dr = (1.0 - f.C * f.ce) / pole.r0;
  f.dzeta_dz = -f.S * f.se / pole.r0;
  f.deta_dr = f.dzeta_dz;
  f.deta_dz = -f.dzeta_dr;
  f.tab = legendre_half_table(n_max, f.C);
  return f;
}

// Accumulate one term A * trig(n eta) * T_n into value and gradient.
inline void accumulate(const EvalFrame& f, double coef, double trig, double dtrig_deta,
                       double T, double dT, double& psi, double& gr, double& gz) {
  double G = trig * T;
  double dG_dz = trig * dT * f.S;       // d/d zeta: T'(cosh) * sinh
  double dG_de = dtrig_deta * T;
  psi += coef * f.pref * G;
  double dpsi_dz = coef * (f.dpref_dz * G + f.pref * dG_dz);
  double dpsi_de = coef * (f.dpref_de * G + f.pref * dG_de);
  gr += dpsi_dz * f.dzeta_dr + dpsi_de * f.deta_dr;
  gz += dpsi_dz * f.dzeta_dz + dpsi_de * f.deta_dz;
}

}  // namespace

HarmonicBasis eval_basis(ToroidalPole pole, int n_e, int n_i, Vec2 p) {
  if (n_e < 0 || n_i < 0 || n_e > MAX_HARMONIC_ORDER || n_i > MAX_HARMONIC_ORDER)
    fail(ErrorCode::DomainError, "harmonic truncation order out of range");
  int n_max = std::max(n_e, n_i);
  EvalFrame f = make_frame(pole, n_max, p);

  int dim = harmonic_dim(n_e, n_i);
  HarmonicBasis out;
  out.psi = Eigen::VectorXd::Zero(dim);
  out.grad.assign(dim, Vec2{});
  out.overflow = f.tab.overflow;

  // cos(n eta), sin(n eta) tables.
  std::vector<double> cn(n_max + 1), sn(n_max + 1);
  cn[0] = 1.0;
  sn[0] = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    cn[n] = cn[n - 1] * f.ce - sn[n - 1] * f.se;
    sn[n] = sn[n - 1] * f.ce + cn[n - 1] * f.se;
  }

  int k = 0;
  auto emit = [&](double trig, double dtrig, double T, double dT) {
    double psi = 0, gr = 0, gz = 0;
    accumulate(f, 1.0, trig, dtrig, T, dT, psi, gr, gz);
    out.psi[k] = psi;
    out.grad[k] = {gr, gz};
    ++k;
  };
  for (int n = 0; n <= n_e; ++n) emit(cn[n], -n * sn[n], f.tab.q[n], f.tab.dq[n]);
  for (int n = 1; n <= n_e; ++n) emit(sn[n], n * cn[n], f.tab.q[n], f.tab.dq[n]);
  for (int n = 0; n <= n_i; ++n) emit(cn[n], -n * sn[n], f.tab.p[n], f.tab.dp[n]);
  for (int n = 1; n <= n_i; ++n) emit(sn[n], n * cn[n], f.tab.p[n], f.tab.dp[n]);
  return out;
}

double eval_psi_th(const HarmonicCoeffs& c, Vec2 p) {
  HarmonicBasis b = eval_basis(c.pole, c.n_e, c.n_i, p);
  return b.psi.dot(c.to_vector());
}

Vec2 eval_grad_psi_th(const HarmonicCoeffs& c, Vec2 p) {
  HarmonicBasis b = eval_basis(c.pole, c.n_e, c.n_i, p);
  Eigen::VectorXd u = c.to_vector();
  Vec2 g;
  for (int i = 0; i < u.size(); ++i) g += b.grad[i] * u[i];
  return g;
}

Vec2 eval_B_th(const HarmonicCoeffs& c, Vec2 p) {
  Vec2 g = eval_grad_psi_th(c, p);
  return {-g.z / p.r, g.r / p.r};
}

}  // namespace torflux
