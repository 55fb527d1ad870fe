#pragma once

#include <cstdint>
#include <string>

#include "torflux/geometry.hpp"
#include "torflux/magnetostatics.hpp"
#include "torflux/th_fit.hpp"

namespace torflux {

// Static machine geometry: diagnostics, poloidal-field coils, limiter, and
// the fixed observation contour specification.
struct GammaOSpec {
  std::vector<Vec2> points;  // explicit contour; empty -> derive from sensors
  double offset = 0.05;      // inward offset of the sensor hull [m]
  int n_points = 128;
};

struct MachineDescription {
  std::string name;
  SensorSet sensors;
  CoilSet coils;
  Contour limiter;
  GammaOSpec gamma_o;

  Contour gamma_o_contour() const;

  // FNV-1a 64 content hash of the canonical serialization.
  std::string hash() const;

  std::string to_json_string() const;
  static MachineDescription from_json_string(const std::string& text);
  static MachineDescription load(const std::string& path);
  void save(const std::string& path) const;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);

}  // namespace torflux
