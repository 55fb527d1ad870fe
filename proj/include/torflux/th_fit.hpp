#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "torflux/geometry.hpp"
#include "torflux/magnetostatics.hpp"
#include "torflux/toroidal_harmonics.hpp"

namespace torflux {

// Magnetic diagnostics in the poloidal plane.
struct MagneticProbe {
  Vec2 pos;
  Vec2 dir;  // unit vector; measures B . dir
};

struct FluxLoop {
  Vec2 pos;  // measures psi
};

struct SaddleLoop {
  Vec2 pos_a, pos_b;  // measures psi(pos_a) - psi(pos_b)
};

struct SensorSet {
  std::vector<MagneticProbe> probes;
  std::vector<FluxLoop> flux_loops;
  std::vector<SaddleLoop> saddle_loops;

  int count() const {
    return static_cast<int>(probes.size() + flux_loops.size() + saddle_loops.size());
  }
  std::vector<Vec2> positions() const;  // all sensor locations (saddles: both ends)
};

// Assumed per-type measurement errors, used as least-squares row weights.
struct Weights {
  double sigma_b = 2.0e-3;  // T
  double sigma_f = 1.0e-3;  // Wb
  double sigma_s = 1.0e-3;  // Wb
};

// One time slice of measurements, ordered as the SensorSet.
struct MeasurementSet {
  Eigen::VectorXd b;  // probes
  Eigen::VectorXd f;  // flux loops
  Eigen::VectorXd s;  // saddle loops
};

// Weighted design matrix: rows are sensors scaled by 1/sigma of their type
// (probes, then flux loops, then saddle loops), columns the packed harmonic
// coefficients.
Eigen::MatrixXd build_design_matrix(const SensorSet& sensors, const Weights& w,
                                    ToroidalPole pole, int n_e, int n_i);

// Subtract the known poloidal-field-coil contribution (coils scaled by the
// measured coil currents) from every measurement.
MeasurementSet subtract_coil_contributions(const MeasurementSet& m, const SensorSet& sensors,
                                           const CoilSet& coils,
                                           const std::map<std::string, double>& currents);

struct FitResult {
  HarmonicCoeffs coeffs;
  double cond = 0.0;        // R-diagonal condition estimate of the weighted system
  int rank = 0;
  double rms_b = 0.0;       // per-type residual RMS in physical units
  double rms_f = 0.0;
  double rms_s = 0.0;
};

// Weighted least-squares fit of coil-subtracted measurements. Throws
// RankDeficient when the column-pivoted QR detects rank loss or the
// condition estimate exceeds `cond_limit`.
FitResult fit_coefficients(const SensorSet& sensors, const MeasurementSet& plasma_only,
                           const Weights& w, ToroidalPole pole, int n_e, int n_i,
                           double cond_limit = 1e12);

// Pole must lie strictly inside the convex hull of the sensor positions.
void check_pole_in_hull(ToroidalPole pole, const SensorSet& sensors);

// Cauchy data on a closed contour: f = psi (total: expansion + coils),
// g = (1/r) dpsi/dn with the outward normal, which equals the tangential
// poloidal field along the CCW tangent.
struct CauchyData {
  Contour contour;
  Eigen::VectorXd f;
  Eigen::VectorXd g;
};

CauchyData eval_cauchy(const HarmonicCoeffs& c, const CoilSet& coils,
                       const std::map<std::string, double>& currents, const Contour& gamma);

// Same, with pre-scaled coils.
CauchyData eval_cauchy_scaled(const HarmonicCoeffs& c, const CoilSet& coils_scaled,
                              const Contour& gamma);

// Tangential poloidal field B . t (expansion + coils) at directed samples,
// e.g. the outer-edge Gauss points feeding the mixed-problem flux load.
Eigen::VectorXd eval_tangential_field(const HarmonicCoeffs& c, const CoilSet& coils_scaled,
                                      const std::vector<FluxSample>& samples);

// Net toroidal plasma current and current-weighted centroid from Cauchy data
// on a contour enclosing the plasma (coil fields integrate to zero):
//   I_p      = -(1/mu0) closed-int B_s ds
//   z_c I_p  = -(1/mu0) closed-int (z B_s + r ln r B_n) ds
//   r_c^2 I_p= -(1/mu0) closed-int (r^2 B_s - 2 r z B_n) ds
// with B_s = g and B_n = -(1/r) df/ds (CCW tangent, outward normal).
struct CurrentCenter {
  double r_c = 0.0;
  double z_c = 0.0;
  double i_p = 0.0;
};

CurrentCenter current_center(const CauchyData& cd, double min_current = 1e3);

// Fixed observation contour: inward offset of the sensor-position convex
// hull, resampled to n points.
Contour build_gamma_o(const SensorSet& sensors, double offset, int n);

}  // namespace torflux
