#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "torflux/annulus_fem.hpp"
#include "torflux/boundary_extract.hpp"
#include "torflux/machine.hpp"
#include "torflux/synth_oracle.hpp"

namespace torflux {

// Reconstruction configuration. Precedence: command-line flags override the
// config file, which overrides these defaults.
struct PipelineConfig {
  int n_e = 4;
  int n_i = 4;
  double epsilon = 5e-4;
  Weights weights;
  double mesh_h = 0.03;
  double inner_radius_frac = 0.4;  // fictitious-boundary radius / limiter minor radius
  int bank_nr = 3;                 // bank center grid (r x z) over the limiter core
  int bank_nz = 3;
  bool two_pass_pole = true;       // refit with the pole moved to the current center
  int jobs = 0;                    // 0 -> hardware concurrency
  std::vector<RefineZone> refine_zones;

  static PipelineConfig from_json_string(const std::string& text);
  static PipelineConfig load(const std::string& path);
  std::string to_json_string() const;
  void validate() const;
};

// One measurement slice (ordered as the machine sensor lists).
struct MeasurementSlice {
  double t = 0.0;
  Eigen::VectorXd b, f, s;
  std::map<std::string, double> coil_currents;
};

std::vector<MeasurementSlice> load_slices(const std::string& path, const SensorSet& sensors);
void save_slices(const std::string& path, const std::vector<MeasurementSlice>& slices);

struct StageTimings {
  double fit_ms = 0.0;
  double cauchy_ms = 0.0;
  double center_ms = 0.0;
  double rhs_ms = 0.0;
  double control_ms = 0.0;
  double boundary_ms = 0.0;
  double total_ms = 0.0;
  double assembly_ms = 0.0;  // 0 on the warm path: no per-slice assembly
};

struct SliceResult {
  double t = 0.0;
  bool ok = false;
  std::string error_stage;
  std::string error_code;
  std::string error_message;

  HarmonicCoeffs coeffs;
  double fit_cond = 0.0;
  double fit_rms_b = 0.0, fit_rms_f = 0.0, fit_rms_s = 0.0;
  CurrentCenter center;
  int bank_entry = -1;
  Eigen::VectorXd control;  // optimal inner-boundary values
  double j_total = 0.0, j_misfit = 0.0, j_regularization = 0.0, data_constant = 0.0;
  PlasmaBoundary boundary;
  CauchyData cauchy;  // on the mesh outer ring (for diagnostics/plot data)
  StageTimings timings;
};

// Bank centers: bank_nr x bank_nz grid over the central region of the limiter.
std::vector<Vec2> bank_centers(const Contour& limiter, const PipelineConfig& cfg);

double limiter_minor_radius(const Contour& limiter);

MeshBank build_bank(const MachineDescription& machine, const PipelineConfig& cfg);

// Binary mesh-bank cache. The loader verifies the format version and the
// machine/config hash; cached meshes are re-assembled into operators and the
// cached dense control matrices are reused verbatim.
void save_bank(const std::string& path, const MeshBank& bank,
               const MachineDescription& machine, const PipelineConfig& cfg);
MeshBank load_bank(const std::string& path, const MachineDescription& machine,
                   const PipelineConfig& cfg);
std::string bank_config_hash(const MachineDescription& machine, const PipelineConfig& cfg);

// Full two-step reconstruction of one slice against a warm bank.
SliceResult reconstruct_slice(const MachineDescription& machine, const MeshBank& bank,
                              const MeasurementSlice& slice, const PipelineConfig& cfg);

// All slices, worker-pool parallel, input order preserved.
std::vector<SliceResult> reconstruct_all(const MachineDescription& machine,
                                         const MeshBank& bank,
                                         const std::vector<MeasurementSlice>& slices,
                                         const PipelineConfig& cfg);

// Model-comparison mode: boundary directly from the truncated expansion plus
// coil fields, via iso-contouring on a structured grid (no second step).
SliceResult reconstruct_slice_harmonic_only(const MachineDescription& machine,
                                            const MeasurementSlice& slice,
                                            const PipelineConfig& cfg);

void save_results(const std::string& path, const std::vector<SliceResult>& results);

// Parse results back (fields needed for plot data and analysis).
std::vector<SliceResult> load_results(const std::string& path);

// CSV plot data (boundary, Cauchy data, summary) into a directory.
void write_plotdata(const std::string& dir, const std::vector<SliceResult>& results);

}  // namespace torflux
