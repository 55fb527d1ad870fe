#pragma once

// Shared synthetic tokamak fixtures for the test suites: a mid-size machine
// with probe/loop/saddle diagnostics on a ring outside a D-shaped limiter,
// four poloidal-field coils, and filament-bundle plasmas.

#include <cmath>
#include <map>
#include <vector>

#include "torflux/machine.hpp"
#include "torflux/magnetostatics.hpp"
#include "torflux/pipeline.hpp"
#include "torflux/synth_oracle.hpp"
#include "torflux/th_fit.hpp"

namespace testsupport {

using namespace torflux;

inline constexpr double kMajorRadius = 2.5;
inline constexpr double kSensorRadius = 1.10;
inline constexpr double kLoopRadius = 1.18;
inline constexpr double kLimiterMinor = 0.75;
inline constexpr double kLimiterElong = 1.35;

inline std::vector<Vec2> limiter_points(int n = 64) {
  std::vector<Vec2> pts;
  for (int i = 0; i < n; ++i) {
    double th = 2.0 * 3.14159265358979323846 * i / n;
    pts.push_back({kMajorRadius + kLimiterMinor * std::cos(th + 0.2 * std::sin(th)),
                   kLimiterElong * kLimiterMinor * std::sin(th)});
  }
  return pts;
}

inline SensorSet make_sensors(int n_probes = 48, int n_loops = 32, int n_saddles = 8) {
  const double pi = 3.14159265358979323846;
  SensorSet s;
  for (int i = 0; i < n_probes; ++i) {
    double th = 2.0 * pi * i / n_probes;
    Vec2 pos{kMajorRadius + kSensorRadius * std::cos(th), kSensorRadius * std::sin(th)};
    // alternate tangential and normal pickup directions
    Vec2 dir = (i % 2 == 0) ? Vec2{-std::sin(th), std::cos(th)}
                            : Vec2{std::cos(th), std::sin(th)};
    s.probes.push_back({pos, dir});
  }
  for (int i = 0; i < n_loops; ++i) {
    double th = 2.0 * pi * (i + 0.5) / n_loops;
    s.flux_loops.push_back(
        {{kMajorRadius + kLoopRadius * std::cos(th), kLoopRadius * std::sin(th)}});
  }
  for (int i = 0; i < n_saddles; ++i) {
    double th0 = 2.0 * pi * i / n_saddles;
    double th1 = 2.0 * pi * (i + 0.45) / n_saddles;
    s.saddle_loops.push_back(
        {{kMajorRadius + kLoopRadius * std::cos(th0), kLoopRadius * std::sin(th0)},
         {kMajorRadius + kLoopRadius * std::cos(th1), kLoopRadius * std::sin(th1)}});
  }
  return s;
}

inline CoilSet make_coils() {
  auto ring = [](double r, double z) {
    std::vector<Filament> f;
    for (int i = -1; i <= 1; ++i) f.push_back({r + 0.04 * i, z, 20.0});  // 3 x 20 turns
    return f;
  };
  return CoilSet::from_groups({{"PF_UPPER_IN", ring(1.45, 2.05)},
                               {"PF_LOWER_IN", ring(1.45, -2.05)},
                               {"PF_UPPER_OUT", ring(3.85, 1.55)},
                               {"PF_LOWER_OUT", ring(3.85, -1.55)}});
}

inline std::map<std::string, double> nominal_coil_currents() {
  return {{"PF_UPPER_IN", 2.4e3},
          {"PF_LOWER_IN", 2.6e3},
          {"PF_UPPER_OUT", -1.8e3},
          {"PF_LOWER_OUT", -1.6e3}};
}

inline MachineDescription make_machine() {
  MachineDescription m;
  m.name = "synthetic-midsize";
  m.sensors = make_sensors();
  m.coils = make_coils();
  m.limiter = Contour::from_points(limiter_points());
  m.gamma_o.offset = 0.08;
  m.gamma_o.n_points = 128;
  return m;
}

inline SyntheticEquilibrium make_equilibrium(double i_p = 6.0e5, Vec2 axis = {2.55, 0.05},
                                             double minor = 0.52, double elong = 1.30,
                                             double tri = 0.30, std::uint64_t seed = 0) {
  SyntheticEquilibrium eq;
  eq.plasma = dshape_filaments(axis, minor, elong, tri, 5, i_p);
  eq.coils = make_coils();
  eq.coil_currents = nominal_coil_currents();
  eq.seed = seed;
  return eq;
}

inline MeasurementSlice slice_from(const MeasurementSet& ms,
                                   const std::map<std::string, double>& currents,
                                   double t = 0.0) {
  MeasurementSlice s;
  s.t = t;
  s.b = ms.b;
  s.f = ms.f;
  s.s = ms.s;
  s.coil_currents = currents;
  return s;
}

}  // namespace testsupport
