#pragma once

#include <Eigen/Dense>
#include <vector>

#include "torflux/geometry.hpp"

namespace torflux {

// Pole of the toroidal coordinate system in the poloidal plane.
struct ToroidalPole {
  double r0 = 0.0;
  double z0 = 0.0;
};

// Toroidal coordinates (zeta, eta): zeta > 0 away from the axis, eta in [0, 2pi).
struct ToroidalCoords {
  double zeta = 0.0;
  double eta = 0.0;
};

// Map (r, z) -> (zeta, eta) about the given pole. Throws AxisDomain for
// r <= 0 and PoleSingularity within 1e-12 m of the pole.
ToroidalCoords to_toroidal(Vec2 p, ToroidalPole pole);

// Inverse map (zeta, eta) -> (r, z).
Vec2 from_toroidal(ToroidalCoords c, ToroidalPole pole);

// Values and x-derivatives of the order-1, half-integer-degree Legendre
// functions T_n = P^1_{n-1/2}(x) (second family: Q^1_{n-1/2}) for
// n = 0..n_max at fixed x > 1.
struct LegendreTable {
  std::vector<double> p;   // P^1_{n-1/2}(x)
  std::vector<double> dp;  // d/dx P^1_{n-1/2}(x)
  std::vector<double> q;   // Q^1_{n-1/2}(x)
  std::vector<double> dq;  // d/dx Q^1_{n-1/2}(x)
  bool overflow = false;   // a value exceeded the floating range
};

// Highest harmonic order accepted (guards recurrence length and overflow).
inline constexpr int MAX_HARMONIC_ORDER = 12;

LegendreTable legendre_half_table(int n_max, double x);

// Truncated toroidal-harmonic expansion of the poloidal flux about `pole`:
// external (Q, regular at the pole) orders 0..n_e with cos/sin coefficients
// a_e/b_e, internal (P, regular at infinity/axis) orders 0..n_i with a_i/b_i.
// The sin coefficient of order 0 is identically absent.
struct HarmonicCoeffs {
  ToroidalPole pole;
  int n_e = 0;
  int n_i = 0;
  std::vector<double> a_e{0.0};  // size n_e + 1
  std::vector<double> b_e;       // size n_e (orders 1..n_e)
  std::vector<double> a_i{0.0};  // size n_i + 1
  std::vector<double> b_i;       // size n_i

  static HarmonicCoeffs zeros(ToroidalPole pole, int n_e, int n_i);
  static HarmonicCoeffs from_vector(ToroidalPole pole, int n_e, int n_i,
                                    const Eigen::VectorXd& u);
  Eigen::VectorXd to_vector() const;

  // Packed coefficient count: 2 n_e + 2 n_i + 2.
  int dim() const { return 2 * n_e + 2 * n_i + 2; }
};

// Number of packed coefficients for given truncation orders.
inline int harmonic_dim(int n_e, int n_i) { return 2 * n_e + 2 * n_i + 2; }

// Per-coefficient values of psi and grad psi at one point, in the packed
// order [a_e_0..a_e_ne, b_e_1..b_e_ne, a_i_0..a_i_ni, b_i_1..b_i_ni].
struct HarmonicBasis {
  Eigen::VectorXd psi;
  std::vector<Vec2> grad;  // (d psi/dr, d psi/dz) per coefficient
  bool overflow = false;
};

HarmonicBasis eval_basis(ToroidalPole pole, int n_e, int n_i, Vec2 p);

double eval_psi_th(const HarmonicCoeffs& c, Vec2 p);
Vec2 eval_grad_psi_th(const HarmonicCoeffs& c, Vec2 p);

// Poloidal field from the expansion: B_r = -(1/r) dpsi/dz, B_z = (1/r) dpsi/dr.
Vec2 eval_B_th(const HarmonicCoeffs& c, Vec2 p);

}  // namespace torflux
