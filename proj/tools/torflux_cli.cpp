// Command-line front end: precompute a mesh bank, generate synthetic
// measurements, reconstruct plasma boundaries, and export plot data.
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "torflux/errors.hpp"
#include "torflux/pipeline.hpp"

using namespace torflux;
using nlohmann::json;

namespace {

struct ConfigCli {
  std::string config_path;
  int n_e = -1, n_i = -1;
  double epsilon = -1, mesh_h = -1, inner_radius_frac = -1;
  int bank_nr = -1, bank_nz = -1, jobs = -1;
  double sigma_b = -1, sigma_f = -1, sigma_s = -1;
  int two_pass = -1;

  void add_options(CLI::App* app) {
    app->add_option("--config", config_path, "configuration JSON file");
    app->add_option("--order-external", n_e, "external truncation order");
    app->add_option("--order-internal", n_i, "internal truncation order");
    app->add_option("--epsilon", epsilon, "control regularization");
    app->add_option("--mesh-h", mesh_h, "target mesh edge length [m]");
    app->add_option("--inner-radius-frac", inner_radius_frac,
                    "fictitious boundary radius / limiter minor radius");
    app->add_option("--bank-nr", bank_nr, "bank centers in r");
    app->add_option("--bank-nz", bank_nz, "bank centers in z");
    app->add_option("--jobs", jobs, "worker threads (0 = all cores)");
    app->add_option("--sigma-b", sigma_b, "probe weight [T]");
    app->add_option("--sigma-f", sigma_f, "flux-loop weight [Wb]");
    app->add_option("--sigma-s", sigma_s, "saddle-loop weight [Wb]");
    app->add_flag("--two-pass,!--single-pass", two_pass,
                  "refit with the pole at the current center (default on)");
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = PipelineConfig::load(config_path);
    if (n_e >= 0) cfg.n_e = n_e;
    if (n_i >= 0) cfg.n_i = n_i;
    if (epsilon > 0) cfg.epsilon = epsilon;
    if (mesh_h > 0) cfg.mesh_h = mesh_h;
    if (inner_radius_frac > 0) cfg.inner_radius_frac = inner_radius_frac;
    if (bank_nr > 0) cfg.bank_nr = bank_nr;
    if (bank_nz > 0) cfg.bank_nz = bank_nz;
    if (jobs >= 0) cfg.jobs = jobs;
    if (sigma_b > 0) cfg.weights.sigma_b = sigma_b;
    if (sigma_f > 0) cfg.weights.sigma_f = sigma_f;
    if (sigma_s > 0) cfg.weights.sigma_s = sigma_s;
    if (two_pass == 1) cfg.two_pass_pole = true;
    if (two_pass == 0) cfg.two_pass_pole = false;
    cfg.validate();
    return cfg;
  }
};

SyntheticEquilibrium scenario_from_json(const std::string& path, const MachineDescription& m) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open scenario file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, std::string("scenario JSON parse error: ") + e.what());
  }
  SyntheticEquilibrium eq;
  eq.coils = m.coils;
  try {
    eq.seed = j.value("seed", 0ull);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      eq.noise.sigma_b = n.value("sigma_b", 0.0);
      eq.noise.sigma_f = n.value("sigma_f", 0.0);
      eq.noise.sigma_s = n.value("sigma_s", 0.0);
    }
    for (const auto& [k, v] : j.value("coil_currents", json::object()).items())
      eq.coil_currents[k] = v.get<double>();
    const auto& p = j.at("plasma");
    if (p.contains("filaments")) {
      for (const auto& f : p.at("filaments"))
        eq.plasma.push_back({f.at("r").get<double>(), f.at("z").get<double>(),
                             f.at("current").get<double>()});
    } else if (p.contains("dshape")) {
      const auto& d = p.at("dshape");
      eq.plasma = dshape_filaments(
          {d.at("r").get<double>(), d.at("z").get<double>()},
          d.at("minor_radius").get<double>(), d.value("elongation", 1.0),
          d.value("triangularity", 0.0), d.value("n_rings", 4),
          d.at("total_current").get<double>());
    } else {
      fail(ErrorCode::ConfigError, "scenario plasma needs 'filaments' or 'dshape'");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("scenario JSON structure error: ") + e.what());
  }
  return eq;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vacuum poloidal-flux and plasma-boundary reconstruction from magnetic "
               "measurements"};
  app.require_subcommand(1);

  std::string machine_path, bank_path, meas_path, results_path, scenario_path, out_dir,
      ref_path;
  int n_slices = 1;
  bool harmonic_only = false;

  ConfigCli pre_cfg;
  auto* pre = app.add_subcommand("precompute", "build and cache the mesh bank");
  pre->add_option("--machine", machine_path, "machine JSON")->required();
  pre->add_option("--out", bank_path, "output bank cache")->required();
  pre_cfg.add_options(pre);

  ConfigCli syn_cfg;
  auto* syn = app.add_subcommand("synth", "generate synthetic measurements");
  syn->add_option("--machine", machine_path, "machine JSON")->required();
  syn->add_option("--scenario", scenario_path, "scenario JSON")->required();
  syn->add_option("--out", meas_path, "output measurements JSONL")->required();
  syn->add_option("--slices", n_slices, "number of slices (reseeded per slice)");
  syn->add_option("--ref-boundary", ref_path, "write the ground-truth boundary JSON");
  syn_cfg.add_options(syn);

  ConfigCli rec_cfg;
  auto* rec = app.add_subcommand("reconstruct", "reconstruct plasma boundaries");
  rec->add_option("--machine", machine_path, "machine JSON")->required();
  rec->add_option("--bank", bank_path, "bank cache from 'precompute'");
  rec->add_option("--measurements", meas_path, "measurements JSONL")->required();
  rec->add_option("--out", results_path, "output results JSONL")->required();
  rec->add_flag("--harmonic-only", harmonic_only,
                "skip the second step; boundary from the fitted expansion");
  rec_cfg.add_options(rec);

  auto* plot = app.add_subcommand("plotdata", "export CSV plot data from results");
  plot->add_option("--results", results_path, "results JSONL")->required();
  plot->add_option("--out-dir", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) {
      MachineDescription m = MachineDescription::load(machine_path);
      PipelineConfig cfg = pre_cfg.resolve();
      MeshBank bank = build_bank(m, cfg);
      save_bank(bank_path, bank, m, cfg);
      int nodes = 0;
      for (const auto& e : bank.entries) nodes += e->mesh.n_nodes();
      std::printf("bank: %zu entries, %d nodes total, h=%g, epsilon=%g -> %s\n",
                  bank.entries.size(), nodes, cfg.mesh_h, cfg.epsilon, bank_path.c_str());
    } else if (syn->parsed()) {
      MachineDescription m = MachineDescription::load(machine_path);
      SyntheticEquilibrium eq = scenario_from_json(scenario_path, m);
      std::vector<MeasurementSlice> slices;
      for (int k = 0; k < n_slices; ++k) {
        SyntheticEquilibrium eqk = eq;
        eqk.seed = eq.seed + static_cast<std::uint64_t>(k);
        MeasurementSet ms = generate_measurements(eqk, m.sensors);
        MeasurementSlice s;
        s.t = static_cast<double>(k);
        s.b = ms.b;
        s.f = ms.f;
        s.s = ms.s;
        s.coil_currents = eq.coil_currents;
        slices.push_back(std::move(s));
      }
      save_slices(meas_path, slices);
      std::printf("wrote %d slice(s) to %s\n", n_slices, meas_path.c_str());
      if (!ref_path.empty()) {
        PipelineConfig cfg = syn_cfg.resolve();
        ReferenceBoundary rb = reference_boundary(eq, m.limiter, cfg.mesh_h / 2.0);
        json j;
        j["kind"] = rb.kind == BoundaryKind::XPoint ? "xpoint" : "limiter";
        j["psi_b"] = rb.psi_b;
        if (rb.xpoint) j["xpoint"] = json{{"r", rb.xpoint->r}, {"z", rb.xpoint->z}};
        json pts = json::array();
        for (const auto& p : rb.points) pts.push_back(json::array({p.r, p.z}));
        j["points"] = pts;
        std::ofstream out(ref_path);
        if (!out) fail(ErrorCode::IoError, "cannot write reference boundary: " + ref_path);
        out << j.dump(2) << "\n";
        std::printf("wrote reference boundary to %s\n", ref_path.c_str());
      }
    } else if (rec->parsed()) {
      MachineDescription m = MachineDescription::load(machine_path);
      PipelineConfig cfg = rec_cfg.resolve();
      std::vector<MeasurementSlice> slices = load_slices(meas_path, m.sensors);
      std::vector<SliceResult> results;
      if (harmonic_only) {
        results.reserve(slices.size());
        for (const auto& s : slices)
          results.push_back(reconstruct_slice_harmonic_only(m, s, cfg));
      } else {
        if (bank_path.empty())
          fail(ErrorCode::ConfigError, "--bank is required unless --harmonic-only");
        MeshBank bank = load_bank(bank_path, m, cfg);
        results = reconstruct_all(m, bank, slices, cfg);
      }
      save_results(results_path, results);
      int ok = 0;
      for (const auto& r : results) ok += r.ok ? 1 : 0;
      std::printf("reconstructed %d/%zu slices -> %s\n", ok, results.size(),
                  results_path.c_str());
      for (const auto& r : results)
        if (!r.ok)
          std::fprintf(stderr, "slice t=%g failed at %s: %s\n", r.t, r.error_stage.c_str(),
                       r.error_message.c_str());
    } else if (plot->parsed()) {
      std::vector<SliceResult> results = load_results(results_path);
      write_plotdata(out_dir, results);
      std::printf("wrote plot data for %zu slice(s) to %s\n", results.size(), out_dir.c_str());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
