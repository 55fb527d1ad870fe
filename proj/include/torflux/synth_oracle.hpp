#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "torflux/boundary_extract.hpp"
#include "torflux/magnetostatics.hpp"
#include "torflux/th_fit.hpp"

namespace torflux {

// Deterministic standard-normal generator: mt19937_64 + explicit Box-Muller,
// bit-reproducible across platforms for a given seed.
class GaussianRng {
public:
  explicit GaussianRng(std::uint64_t seed) : rng_(seed) {}
  double uniform();  // (0, 1]
  double normal();

private:
  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

struct NoiseSpec {
  double sigma_b = 0.0;
  double sigma_f = 0.0;
  double sigma_s = 0.0;
};

// Synthetic axisymmetric equilibrium: plasma as a filament bundle plus the
// machine coils with their currents.
struct SyntheticEquilibrium {
  std::vector<Filament> plasma;
  CoilSet coils;
  std::map<std::string, double> coil_currents;
  NoiseSpec noise;
  std::uint64_t seed = 0;
};

// Filament bundle filling nested D-shaped surfaces around (axis_r, axis_z):
// minor radius a, elongation kappa, triangularity delta; parabolic current
// density in the flux-surface label, normalized to total_current.
std::vector<Filament> dshape_filaments(Vec2 axis, double minor_radius, double elongation,
                                       double triangularity, int n_rings,
                                       double total_current);

// Exact forward model + optional Gaussian noise, ordered probes/loops/saddles.
MeasurementSet generate_measurements(const SyntheticEquilibrium& eq, const SensorSet& sensors);

double psi_total(const SyntheticEquilibrium& eq, Vec2 p);
Vec2 B_total(const SyntheticEquilibrium& eq, Vec2 p);

// Ground-truth plasma boundary: the exact flux sampled on a fine structured
// grid over the limiter region, run through the same saddle-detection and
// iso-contour logic as the reconstruction, with saddle positions polished by
// Newton iteration on the exact field.
struct ReferenceBoundary {
  std::vector<Vec2> points;  // closed: first == last
  double psi_b = 0.0;
  BoundaryKind kind = BoundaryKind::Limiter;
  std::optional<Vec2> xpoint;
};

ReferenceBoundary reference_boundary(const SyntheticEquilibrium& eq, const Contour& limiter,
                                     double grid_h);

// Structured triangulated grid over a rectangle (used by the reference
// boundary and the harmonic-only extraction); border nodes are tagged as the
// outer boundary, there is no inner boundary.
TriMesh grid_mesh(Vec2 lo, Vec2 hi, double h);

}  // namespace torflux
