#pragma once

#include <map>
#include <string>
#include <vector>

#include "torflux/geometry.hpp"

namespace torflux {

inline constexpr double MU0 = 4e-7 * 3.14159265358979323846;

struct EllipticKE {
  double K;
  double E;
};

// Complete elliptic integrals K(m), E(m) with parameter m = k^2 in [0, 1).
// Arithmetic-geometric mean iteration, machine accuracy.
EllipticKE ellip_KE(double m);

// Axisymmetric circular current loop ("filament") at (r, z) carrying
// `current` amperes in the toroidal direction.
struct Filament {
  double r = 0.0;
  double z = 0.0;
  double current = 0.0;
};

// Poloidal flux psi(p) of a single filament.
double psi_filament(const Filament& f, Vec2 p);

// Poloidal field (B_r, B_z) of a single filament.
Vec2 B_filament(const Filament& f, Vec2 p);

// Poloidal-field coil system: a flat filament list partitioned into named
// coils. Each label owns the contiguous index range [first, first+count).
// Filament currents are stored per unit coil current; scaled_by() applies
// the measured coil currents.
struct CoilRange {
  std::string label;
  int first = 0;
  int count = 0;
};

struct CoilSet {
  std::vector<Filament> filaments;
  std::vector<CoilRange> coils;

  static CoilSet from_groups(
      const std::vector<std::pair<std::string, std::vector<Filament>>>& groups);

  void validate() const;  // ranges tile [0, filaments.size()), labels unique

  // Multiply each coil's filament currents by the supplied per-coil current.
  // Every coil label must be present in `currents`.
  CoilSet scaled_by(const std::map<std::string, double>& currents) const;
};

double psi_coils(const CoilSet& cs, Vec2 p);
Vec2 B_coils(const CoilSet& cs, Vec2 p);

double psi_filaments(const std::vector<Filament>& fs, Vec2 p);
Vec2 B_filaments(const std::vector<Filament>& fs, Vec2 p);

}  // namespace torflux
