#include "torflux/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "torflux/errors.hpp"

namespace torflux {

using nlohmann::json;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  if (n_e < 0 || n_i < 0 || n_e > MAX_HARMONIC_ORDER || n_i > MAX_HARMONIC_ORDER)
    fail(ErrorCode::ConfigError, "truncation orders must be in [0, 12]");
  if (epsilon <= 0) fail(ErrorCode::ConfigError, "epsilon must be positive");
  if (mesh_h <= 0) fail(ErrorCode::ConfigError, "mesh_h must be positive");
  if (inner_radius_frac <= 0 || inner_radius_frac >= 0.9)
    fail(ErrorCode::ConfigError, "inner_radius_frac must be in (0, 0.9)");
  if (bank_nr < 1 || bank_nz < 1)
    fail(ErrorCode::ConfigError, "bank grid must have at least one center");
  if (weights.sigma_b <= 0 || weights.sigma_f <= 0 || weights.sigma_s <= 0)
    fail(ErrorCode::ConfigError, "weights must be positive");
}

PipelineConfig PipelineConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, std::string("config JSON parse error: ") + e.what());
  }
  PipelineConfig c;
  try {
    c.n_e = j.value("n_e", c.n_e);
    c.n_i = j.value("n_i", c.n_i);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.mesh_h = j.value("mesh_h", c.mesh_h);
    c.inner_radius_frac = j.value("inner_radius_frac", c.inner_radius_frac);
    c.bank_nr = j.value("bank_nr", c.bank_nr);
    c.bank_nz = j.value("bank_nz", c.bank_nz);
    c.two_pass_pole = j.value("two_pass_pole", c.two_pass_pole);
    c.jobs = j.value("jobs", c.jobs);
    c.weights.sigma_b = j.value("sigma_b", c.weights.sigma_b);
    c.weights.sigma_f = j.value("sigma_f", c.weights.sigma_f);
    c.weights.sigma_s = j.value("sigma_s", c.weights.sigma_s);
    for (const auto& z : j.value("refine_zones", json::array()))
      c.refine_zones.push_back(
          {{z.at("r").get<double>(), z.at("z").get<double>()}, z.at("h").get<double>()});
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config JSON structure error: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

std::string PipelineConfig::to_json_string() const {
  json j;
  j["n_e"] = n_e;
  j["n_i"] = n_i;
  j["epsilon"] = epsilon;
  j["mesh_h"] = mesh_h;
  j["inner_radius_frac"] = inner_radius_frac;
  j["bank_nr"] = bank_nr;
  j["bank_nz"] = bank_nz;
  j["two_pass_pole"] = two_pass_pole;
  j["jobs"] = jobs;
  j["sigma_b"] = weights.sigma_b;
  j["sigma_f"] = weights.sigma_f;
  j["sigma_s"] = weights.sigma_s;
  json zones = json::array();
  for (const auto& z : refine_zones)
    zones.push_back(json{{"r", z.at.r}, {"z", z.at.z}, {"h", z.h}});
  j["refine_zones"] = zones;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Slices I/O (JSON Lines)

std::vector<MeasurementSlice> load_slices(const std::string& path, const SensorSet& sensors) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open measurements file: " + path);
  std::vector<MeasurementSlice> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::IoError, "measurements line " + std::to_string(lineno) +
                                   " parse error: " + e.what());
    }
    MeasurementSlice s;
    s.t = j.value("t", 0.0);
    auto vec = [&](const char* key, std::size_t want) {
      const auto& a = j.at(key);
      if (a.size() != want)
        fail(ErrorCode::ConfigError,
             "measurements line " + std::to_string(lineno) + ": '" + key + "' has " +
                 std::to_string(a.size()) + " values, expected " + std::to_string(want));
      Eigen::VectorXd v(static_cast<int>(want));
      for (std::size_t i = 0; i < want; ++i) v[static_cast<int>(i)] = a.at(i).get<double>();
      return v;
    };
    try {
      s.b = vec("b", sensors.probes.size());
      s.f = vec("f", sensors.flux_loops.size());
      s.s = vec("s", sensors.saddle_loops.size());
      json currents = j.value("coil_currents", json::object());
      for (const auto& [k, v] : currents.items()) s.coil_currents[k] = v.get<double>();
    } catch (const json::exception& e) {
      fail(ErrorCode::ConfigError, "measurements line " + std::to_string(lineno) +
                                       " structure error: " + e.what());
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) fail(ErrorCode::IoError, "measurements file has no slices: " + path);
  return out;
}

void save_slices(const std::string& path, const std::vector<MeasurementSlice>& slices) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write measurements file: " + path);
  for (const auto& s : slices) {
    json j;
    j["t"] = s.t;
    j["b"] = std::vector<double>(s.b.data(), s.b.data() + s.b.size());
    j["f"] = std::vector<double>(s.f.data(), s.f.data() + s.f.size());
    j["s"] = std::vector<double>(s.s.data(), s.s.data() + s.s.size());
    j["coil_currents"] = s.coil_currents;
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Bank construction

double limiter_minor_radius(const Contour& limiter) {
  double rmin = 1e300, rmax = -1e300;
  for (const auto& p : limiter.points) {
    rmin = std::min(rmin, p.r);
    rmax = std::max(rmax, p.r);
  }
  return 0.5 * (rmax - rmin);
}

std::vector<Vec2> bank_centers(const Contour& limiter, const PipelineConfig& cfg) {
  double rmin = 1e300, rmax = -1e300, zmin = 1e300, zmax = -1e300;
  for (const auto& p : limiter.points) {
    rmin = std::min(rmin, p.r);
    rmax = std::max(rmax, p.r);
    zmin = std::min(zmin, p.z);
    zmax = std::max(zmax, p.z);
  }
  Vec2 c{0.5 * (rmin + rmax), 0.5 * (zmin + zmax)};
  // cover the central third of the limiter box, where current centers live
  double dr = (rmax - rmin) / 6.0, dz = (zmax - zmin) / 6.0;
  std::vector<Vec2> out;
  for (int i = 0; i < cfg.bank_nr; ++i)
    for (int j = 0; j < cfg.bank_nz; ++j) {
      double fr = cfg.bank_nr > 1 ? 2.0 * i / (cfg.bank_nr - 1.0) - 1.0 : 0.0;
      double fz = cfg.bank_nz > 1 ? 2.0 * j / (cfg.bank_nz - 1.0) - 1.0 : 0.0;
      out.push_back({c.r + fr * dr, c.z + fz * dz});
    }
  return out;
}

MeshBank build_bank(const MachineDescription& machine, const PipelineConfig& cfg) {
  cfg.validate();
  Contour gamma_o = machine.gamma_o_contour();
  double radius = cfg.inner_radius_frac * limiter_minor_radius(machine.limiter);
  return build_mesh_bank(gamma_o, bank_centers(machine.limiter, cfg), radius, cfg.mesh_h,
                         cfg.epsilon, cfg.refine_zones);
}

// ---------------------------------------------------------------------------
// Bank cache (binary, native endianness)

namespace {

constexpr char BANK_MAGIC[8] = {'T', 'F', 'B', 'A', 'N', 'K', '0', '1'};
constexpr std::uint32_t BANK_VERSION = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(ErrorCode::IoError, "bank cache truncated");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  auto n = get<std::uint32_t>(is);
  if (n > 1u << 20) fail(ErrorCode::IoError, "bank cache string too long");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) fail(ErrorCode::IoError, "bank cache truncated");
  return s;
}

}  // namespace

std::string bank_config_hash(const MachineDescription& machine, const PipelineConfig& cfg) {
  // The bank depends on the machine geometry and the mesh/control parameters
  // (not on fit orders, weights or runtime options).
  json j;
  j["machine"] = machine.hash();
  j["mesh_h"] = cfg.mesh_h;
  j["epsilon"] = cfg.epsilon;
  j["inner_radius_frac"] = cfg.inner_radius_frac;
  j["bank_nr"] = cfg.bank_nr;
  j["bank_nz"] = cfg.bank_nz;
  json zones = json::array();
  for (const auto& z : cfg.refine_zones)
    zones.push_back(json{{"r", z.at.r}, {"z", z.at.z}, {"h", z.h}});
  j["refine_zones"] = zones;
  std::string canon = j.dump();
  std::uint64_t h = fnv1a64(canon.data(), canon.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void save_bank(const std::string& path, const MeshBank& bank,
               const MachineDescription& machine, const PipelineConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::IoError, "cannot write bank cache: " + path);
  os.write(BANK_MAGIC, 8);
  put(os, BANK_VERSION);
  put_string(os, bank_config_hash(machine, cfg));
  put(os, bank.h);
  put(os, bank.epsilon);
  put(os, static_cast<std::uint32_t>(bank.entries.size()));
  for (const auto& e : bank.entries) {
    put(os, e->inner.center.r);
    put(os, e->inner.center.z);
    put(os, e->inner.semi_r);
    put(os, e->inner.semi_z);
    const TriMesh& m = e->mesh;
    put(os, static_cast<std::uint32_t>(m.nodes.size()));
    for (const auto& p : m.nodes) {
      put(os, p.r);
      put(os, p.z);
    }
    put(os, static_cast<std::uint32_t>(m.triangles.size()));
    for (const auto& t : m.triangles)
      for (int k = 0; k < 3; ++k) put<std::int32_t>(os, t[k]);
    auto put_ints = [&](const std::vector<int>& v) {
      put(os, static_cast<std::uint32_t>(v.size()));
      for (int x : v) put<std::int32_t>(os, x);
    };
    put_ints(m.inner_nodes);
    put_ints(m.outer_nodes);
    put(os, static_cast<std::uint32_t>(m.inner_edges.size()));
    for (const auto& ed : m.inner_edges) {
      put<std::int32_t>(os, ed[0]);
      put<std::int32_t>(os, ed[1]);
    }
    put(os, static_cast<std::uint32_t>(m.outer_edges.size()));
    for (const auto& ed : m.outer_edges) {
      put<std::int32_t>(os, ed[0]);
      put<std::int32_t>(os, ed[1]);
    }
    const Eigen::MatrixXd& S = e->control->S();
    put(os, static_cast<std::uint32_t>(S.rows()));
    os.write(reinterpret_cast<const char*>(S.data()),
             static_cast<std::streamsize>(sizeof(double) * S.size()));
  }
  if (!os) fail(ErrorCode::IoError, "short write to bank cache: " + path);
}

MeshBank load_bank(const std::string& path, const MachineDescription& machine,
                   const PipelineConfig& cfg) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot open bank cache: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, BANK_MAGIC, 8) != 0)
    fail(ErrorCode::VersionMismatch, "bank cache has unknown magic");
  auto version = get<std::uint32_t>(is);
  if (version != BANK_VERSION)
    fail(ErrorCode::VersionMismatch,
         "bank cache version " + std::to_string(version) + " not supported");
  std::string hash = get_string(is);
  std::string want = bank_config_hash(machine, cfg);
  if (hash != want)
    fail(ErrorCode::CacheMismatch,
         "bank cache was built for a different machine/config (cache " + hash +
             ", expected " + want + ")");
  MeshBank bank;
  bank.h = get<double>(is);
  bank.epsilon = get<double>(is);
  auto n_entries = get<std::uint32_t>(is);
  if (n_entries == 0 || n_entries > 4096)
    fail(ErrorCode::CacheMismatch, "bank cache has implausible entry count");
  for (std::uint32_t k = 0; k < n_entries; ++k) {
    auto e = std::make_unique<BankEntry>();
    e->inner.center.r = get<double>(is);
    e->inner.center.z = get<double>(is);
    e->inner.semi_r = get<double>(is);
    e->inner.semi_z = get<double>(is);
    TriMesh m;
    auto nn = get<std::uint32_t>(is);
    m.nodes.resize(nn);
    for (auto& p : m.nodes) {
      p.r = get<double>(is);
      p.z = get<double>(is);
    }
    auto nt = get<std::uint32_t>(is);
    m.triangles.resize(nt);
    for (auto& t : m.triangles)
      for (int i = 0; i < 3; ++i) t[i] = get<std::int32_t>(is);
    auto get_ints = [&]() {
      auto n = get<std::uint32_t>(is);
      std::vector<int> v(n);
      for (auto& x : v) x = get<std::int32_t>(is);
      return v;
    };
    m.inner_nodes = get_ints();
    m.outer_nodes = get_ints();
    auto nie = get<std::uint32_t>(is);
    m.inner_edges.resize(nie);
    for (auto& ed : m.inner_edges) {
      ed[0] = get<std::int32_t>(is);
      ed[1] = get<std::int32_t>(is);
    }
    auto noe = get<std::uint32_t>(is);
    m.outer_edges.resize(noe);
    for (auto& ed : m.outer_edges) {
      ed[0] = get<std::int32_t>(is);
      ed[1] = get<std::int32_t>(is);
    }
    e->mesh = std::move(m);
    auto srows = get<std::uint32_t>(is);
    Eigen::MatrixXd S(srows, srows);
    is.read(reinterpret_cast<char*>(S.data()),
            static_cast<std::streamsize>(sizeof(double) * S.size()));
    if (!is) fail(ErrorCode::IoError, "bank cache truncated");
    e->sys = std::make_unique<FemSystem>(e->mesh);
    e->control = std::make_unique<ControlOperator>(*e->sys, e->mesh, bank.epsilon, std::move(S));
    e->outer_contour = Contour::from_points(e->mesh.outer_polyline());
    bank.entries.push_back(std::move(e));
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Reconstruction

namespace {

ToroidalPole limiter_barycenter_pole(const Contour& limiter) {
  Vec2 c{};
  for (const auto& p : limiter.points) c += p;
  c = c / static_cast<double>(limiter.size());
  return {c.r, c.z};
}

}  // namespace

SliceResult reconstruct_slice(const MachineDescription& machine, const MeshBank& bank,
                              const MeasurementSlice& slice, const PipelineConfig& cfg) {
  SliceResult res;
  res.t = slice.t;
  auto t_start = std::chrono::steady_clock::now();
  std::string stage = "setup";
  try {
    CoilSet coils_scaled = machine.coils.scaled_by(slice.coil_currents);
    MeasurementSet meas{slice.b, slice.f, slice.s};

    stage = "fit";
    auto t0 = std::chrono::steady_clock::now();
    MeasurementSet plasma_only = subtract_coil_contributions(
        meas, machine.sensors, machine.coils, slice.coil_currents);
    ToroidalPole pole = limiter_barycenter_pole(machine.limiter);
    FitResult fit =
        fit_coefficients(machine.sensors, plasma_only, cfg.weights, pole, cfg.n_e, cfg.n_i);
    res.timings.fit_ms = ms_since(t0);

    stage = "cauchy";
    t0 = std::chrono::steady_clock::now();
    Contour gamma_o = machine.gamma_o_contour();
    CauchyData cauchy = eval_cauchy_scaled(fit.coeffs, coils_scaled, gamma_o);
    res.timings.cauchy_ms = ms_since(t0);

    stage = "center";
    t0 = std::chrono::steady_clock::now();
    CurrentCenter cc = current_center(cauchy);
    res.timings.center_ms = ms_since(t0);

    if (cfg.two_pass_pole) {
      stage = "fit";
      t0 = std::chrono::steady_clock::now();
      ToroidalPole pole2{cc.r_c, cc.z_c};
      fit = fit_coefficients(machine.sensors, plasma_only, cfg.weights, pole2, cfg.n_e,
                             cfg.n_i);
      res.timings.fit_ms += ms_since(t0);
      stage = "cauchy";
      t0 = std::chrono::steady_clock::now();
      cauchy = eval_cauchy_scaled(fit.coeffs, coils_scaled, gamma_o);
      res.timings.cauchy_ms += ms_since(t0);
      stage = "center";
      t0 = std::chrono::steady_clock::now();
      cc = current_center(cauchy);
      res.timings.center_ms += ms_since(t0);
    }
    res.coeffs = fit.coeffs;
    res.fit_cond = fit.cond;
    res.fit_rms_b = fit.rms_b;
    res.fit_rms_f = fit.rms_f;
    res.fit_rms_s = fit.rms_s;
    res.center = cc;

    stage = "control";
    t0 = std::chrono::steady_clock::now();
    const BankEntry& entry = bank.select(cc);
    for (std::size_t i = 0; i < bank.entries.size(); ++i)
      if (bank.entries[i].get() == &entry) res.bank_entry = static_cast<int>(i);
    // Dirichlet data on the mesh outer ring nodes; flux data at the
    // outer-edge Gauss points.
    CauchyData cd = eval_cauchy_scaled(fit.coeffs, coils_scaled, entry.outer_contour);
    Eigen::VectorXd g_flux =
        eval_tangential_field(fit.coeffs, coils_scaled, outer_flux_samples(entry.mesh));
    res.timings.cauchy_ms += ms_since(t0);

    t0 = std::chrono::steady_clock::now();
    ControlRhs rhs = assemble_control_rhs(*entry.sys, entry.mesh, cd.f, g_flux);
    res.timings.rhs_ms = ms_since(t0);

    t0 = std::chrono::steady_clock::now();
    ControlSolution sol = solve_control(*entry.control, rhs);
    res.control = sol.u;
    res.j_total = sol.j_total;
    res.j_misfit = sol.j_misfit;
    res.j_regularization = sol.j_regularization;
    res.data_constant = sol.data_constant;
    res.timings.control_ms = ms_since(t0);

    stage = "boundary";
    t0 = std::chrono::steady_clock::now();
    Eigen::VectorXd full = entry.sys->solve_dirichlet(sol.u, cd.f);
    FemField field(&entry.mesh, std::move(full));
    res.boundary = extract_boundary(field, machine.limiter, cc);
    res.timings.boundary_ms = ms_since(t0);

    res.cauchy = std::move(cd);
    res.ok = true;
  } catch (const Error& e) {
    res.ok = false;
    res.error_stage = stage;
    res.error_code = error_code_name(e.code());
    res.error_message = e.what();
  }
  res.timings.total_ms = ms_since(t_start);
  return res;
}

std::vector<SliceResult> reconstruct_all(const MachineDescription& machine,
                                         const MeshBank& bank,
                                         const std::vector<MeasurementSlice>& slices,
                                         const PipelineConfig& cfg) {
  std::vector<SliceResult> results(slices.size());
  int jobs = cfg.jobs > 0 ? cfg.jobs
                          : static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(slices.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < slices.size(); ++i)
      results[i] = reconstruct_slice(machine, bank, slices[i], cfg);
    return results;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= slices.size()) break;
      results[i] = reconstruct_slice(machine, bank, slices[i], cfg);
    }
  };
  std::vector<std::thread> pool;
  for (int k = 0; k < jobs; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return results;
}

SliceResult reconstruct_slice_harmonic_only(const MachineDescription& machine,
                                            const MeasurementSlice& slice,
                                            const PipelineConfig& cfg) {
  SliceResult res;
  res.t = slice.t;
  auto t_start = std::chrono::steady_clock::now();
  std::string stage = "setup";
  try {
    CoilSet coils_scaled = machine.coils.scaled_by(slice.coil_currents);
    MeasurementSet meas{slice.b, slice.f, slice.s};

    stage = "fit";
    MeasurementSet plasma_only = subtract_coil_contributions(
        meas, machine.sensors, machine.coils, slice.coil_currents);
    ToroidalPole pole = limiter_barycenter_pole(machine.limiter);
    FitResult fit =
        fit_coefficients(machine.sensors, plasma_only, cfg.weights, pole, cfg.n_e, cfg.n_i);

    stage = "cauchy";
    Contour gamma_o = machine.gamma_o_contour();
    CauchyData cauchy = eval_cauchy_scaled(fit.coeffs, coils_scaled, gamma_o);
    stage = "center";
    CurrentCenter cc = current_center(cauchy);

    if (cfg.two_pass_pole) {
      stage = "fit";
      ToroidalPole pole2{cc.r_c, cc.z_c};
      fit = fit_coefficients(machine.sensors, plasma_only, cfg.weights, pole2, cfg.n_e,
                             cfg.n_i);
      stage = "cauchy";
      cauchy = eval_cauchy_scaled(fit.coeffs, coils_scaled, gamma_o);
      stage = "center";
      cc = current_center(cauchy);
    }
    res.coeffs = fit.coeffs;
    res.fit_cond = fit.cond;
    res.fit_rms_b = fit.rms_b;
    res.fit_rms_f = fit.rms_f;
    res.fit_rms_s = fit.rms_s;
    res.center = cc;
    res.cauchy = cauchy;

    stage = "boundary";
    // Direct iso-contouring of the fitted expansion (plus coil fields) on a
    // structured grid over the limiter region.
    Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
    for (const auto& p : machine.limiter.points) {
      lo.r = std::min(lo.r, p.r);
      lo.z = std::min(lo.z, p.z);
      hi.r = std::max(hi.r, p.r);
      hi.z = std::max(hi.z, p.z);
    }
    double h = cfg.mesh_h / 2.0;
    lo -= Vec2{2 * h, 2 * h};
    hi += Vec2{2 * h, 2 * h};
    TriMesh mesh = grid_mesh(lo, hi, h);
    Eigen::VectorXd psi(mesh.n_nodes());
    Vec2 pole_pt{fit.coeffs.pole.r0, fit.coeffs.pole.z0};
    for (int i = 0; i < mesh.n_nodes(); ++i) {
      Vec2 p = mesh.nodes[i];
      // the expansion diverges at its pole: clamp the few nodes next to it
      if ((p - pole_pt).norm() < 1e-6) p.r += 2e-6;
      psi[i] = eval_psi_th(fit.coeffs, p) + psi_coils(coils_scaled, p);
    }
    // The expansion represents the vacuum field; toward the pole it diverges
    // and the values are extrapolation artifacts. Clamp to a window around
    // the limiter-trace range so the divergence cannot distort the contour
    // level scale, and ignore saddle candidates much closer to the pole than
    // the wall is: a separatrix saddle sits near the edge, not near the axis.
    double tr_lo = 1e300, tr_hi = -1e300;
    for (const auto& p : machine.limiter.points) {
      double v = eval_psi_th(fit.coeffs, p) + psi_coils(coils_scaled, p);
      tr_lo = std::min(tr_lo, v);
      tr_hi = std::max(tr_hi, v);
    }
    double span = std::max(tr_hi - tr_lo, 1e-12);
    for (int i = 0; i < mesh.n_nodes(); ++i)
      psi[i] = std::clamp(psi[i], tr_lo - span, tr_hi + span);
    FemField field(&mesh, std::move(psi));
    double wall_dist = point_polyline_distance(pole_pt, machine.limiter.points);
    std::vector<SaddlePoint> saddles = find_xpoints(field);
    std::erase_if(saddles, [&](const SaddlePoint& s) {
      return (s.pos - pole_pt).norm() < 0.3 * wall_dist;
    });
    res.boundary = extract_boundary(field, machine.limiter, cc, saddles);
    res.ok = true;
  } catch (const Error& e) {
    res.ok = false;
    res.error_stage = stage;
    res.error_code = error_code_name(e.code());
    res.error_message = e.what();
  }
  res.timings.total_ms = ms_since(t_start);
  return res;
}

// ---------------------------------------------------------------------------
// Results + plot data

namespace {

json result_to_json(const SliceResult& r) {
  json j;
  j["t"] = r.t;
  j["ok"] = r.ok;
  if (!r.ok) {
    j["error"] = json{{"stage", r.error_stage},
                      {"code", r.error_code},
                      {"message", r.error_message}};
    j["timings_ms"] = json{{"total", r.timings.total_ms}};
    return j;
  }
  Eigen::VectorXd u = r.coeffs.to_vector();
  j["fit"] = json{{"n_e", r.coeffs.n_e},
                  {"n_i", r.coeffs.n_i},
                  {"pole", json{{"r", r.coeffs.pole.r0}, {"z", r.coeffs.pole.z0}}},
                  {"u", std::vector<double>(u.data(), u.data() + u.size())},
                  {"cond", r.fit_cond},
                  {"rms_b", r.fit_rms_b},
                  {"rms_f", r.fit_rms_f},
                  {"rms_s", r.fit_rms_s}};
  j["current_center"] = json{{"r", r.center.r_c}, {"z", r.center.z_c}, {"i_p", r.center.i_p}};
  j["bank_entry"] = r.bank_entry;
  if (r.control.size() > 0)
    j["control"] = std::vector<double>(r.control.data(), r.control.data() + r.control.size());
  j["j"] = json{{"total", r.j_total},
                {"misfit", r.j_misfit},
                {"regularization", r.j_regularization},
                {"data_constant", r.data_constant}};
  json bpts = json::array();
  for (const auto& p : r.boundary.points) bpts.push_back(json::array({p.r, p.z}));
  json b;
  b["kind"] = r.boundary.kind == BoundaryKind::XPoint ? "xpoint" : "limiter";
  b["psi_b"] = r.boundary.psi_b;
  if (r.boundary.xpoint)
    b["xpoint"] = json{{"r", r.boundary.xpoint->r}, {"z", r.boundary.xpoint->z}};
  b["points"] = bpts;
  j["boundary"] = b;
  if (r.cauchy.contour.size() > 0) {
    json c;
    json pts = json::array();
    for (std::size_t k = 0; k < r.cauchy.contour.size(); ++k)
      pts.push_back(json::array({r.cauchy.contour.points[k].r, r.cauchy.contour.points[k].z}));
    c["points"] = pts;
    c["f"] = std::vector<double>(r.cauchy.f.data(), r.cauchy.f.data() + r.cauchy.f.size());
    c["g"] = std::vector<double>(r.cauchy.g.data(), r.cauchy.g.data() + r.cauchy.g.size());
    j["cauchy"] = c;
  }
  j["timings_ms"] = json{{"fit", r.timings.fit_ms},
                         {"cauchy", r.timings.cauchy_ms},
                         {"center", r.timings.center_ms},
                         {"rhs", r.timings.rhs_ms},
                         {"control", r.timings.control_ms},
                         {"boundary", r.timings.boundary_ms},
                         {"assembly", r.timings.assembly_ms},
                         {"total", r.timings.total_ms}};
  return j;
}

SliceResult result_from_json(const json& j) {
  SliceResult r;
  r.t = j.value("t", 0.0);
  r.ok = j.value("ok", false);
  if (!r.ok) {
    const auto& e = j.value("error", json::object());
    r.error_stage = e.value("stage", "");
    r.error_code = e.value("code", "");
    r.error_message = e.value("message", "");
    return r;
  }
  const auto& cc = j.at("current_center");
  r.center = {cc.at("r").get<double>(), cc.at("z").get<double>(), cc.at("i_p").get<double>()};
  const auto& jj = j.value("j", json::object());
  r.j_total = jj.value("total", 0.0);
  r.j_misfit = jj.value("misfit", 0.0);
  r.j_regularization = jj.value("regularization", 0.0);
  r.data_constant = jj.value("data_constant", 0.0);
  const auto& b = j.at("boundary");
  r.boundary.kind =
      b.value("kind", "limiter") == std::string("xpoint") ? BoundaryKind::XPoint
                                                          : BoundaryKind::Limiter;
  r.boundary.psi_b = b.value("psi_b", 0.0);
  if (b.contains("xpoint"))
    r.boundary.xpoint = Vec2{b.at("xpoint").at("r").get<double>(),
                             b.at("xpoint").at("z").get<double>()};
  for (const auto& p : b.at("points"))
    r.boundary.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  if (j.contains("cauchy")) {
    const auto& c = j.at("cauchy");
    std::vector<Vec2> pts;
    for (const auto& p : c.at("points"))
      pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    r.cauchy.contour = Contour::from_points(pts);
    const auto& fv = c.at("f");
    const auto& gv = c.at("g");
    r.cauchy.f.resize(static_cast<int>(fv.size()));
    r.cauchy.g.resize(static_cast<int>(gv.size()));
    for (std::size_t k = 0; k < fv.size(); ++k)
      r.cauchy.f[static_cast<int>(k)] = fv.at(k).get<double>();
    for (std::size_t k = 0; k < gv.size(); ++k)
      r.cauchy.g[static_cast<int>(k)] = gv.at(k).get<double>();
  }
  const auto& tm = j.value("timings_ms", json::object());
  r.timings.fit_ms = tm.value("fit", 0.0);
  r.timings.cauchy_ms = tm.value("cauchy", 0.0);
  r.timings.center_ms = tm.value("center", 0.0);
  r.timings.rhs_ms = tm.value("rhs", 0.0);
  r.timings.control_ms = tm.value("control", 0.0);
  r.timings.boundary_ms = tm.value("boundary", 0.0);
  r.timings.assembly_ms = tm.value("assembly", 0.0);
  r.timings.total_ms = tm.value("total", 0.0);
  return r;
}

}  // namespace

void save_results(const std::string& path, const std::vector<SliceResult>& results) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write results file: " + path);
  for (const auto& r : results) out << result_to_json(r).dump() << "\n";
}

std::vector<SliceResult> load_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open results file: " + path);
  std::vector<SliceResult> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(result_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorCode::IoError,
           "results line " + std::to_string(lineno) + " parse error: " + e.what());
    }
  }
  return out;
}

void write_plotdata(const std::string& dir, const std::vector<SliceResult>& results) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create plot-data directory: " + dir);

  auto open = [&](const std::string& name) {
    std::ofstream f(dir + "/" + name);
    if (!f) fail(ErrorCode::IoError, "cannot write plot-data file: " + dir + "/" + name);
    return f;
  };

  {
    std::ofstream f = open("summary.csv");
    f << "slice,t,ok,kind,psi_b,r_c,z_c,i_p,j_misfit,total_ms\n";
    char buf[512];
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    i, r.t, r.ok ? 1 : 0,
                    r.ok ? (r.boundary.kind == BoundaryKind::XPoint ? "xpoint" : "limiter")
                         : "error",
                    r.boundary.psi_b, r.center.r_c, r.center.z_c, r.center.i_p, r.j_misfit,
                    r.timings.total_ms);
      f << buf;
    }
  }
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.ok) continue;
    char buf[256];
    {
      std::ofstream f = open("boundary_" + std::to_string(i) + ".csv");
      f << "r,z\n";
      for (const auto& p : r.boundary.points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p.r, p.z);
        f << buf;
      }
    }
    if (r.cauchy.contour.size() > 0) {
      std::ofstream f = open("cauchy_" + std::to_string(i) + ".csv");
      f << "s,r,z,f,g\n";
      for (std::size_t k = 0; k < r.cauchy.contour.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.cauchy.contour.arclen[k], r.cauchy.contour.points[k].r,
                      r.cauchy.contour.points[k].z, r.cauchy.f[k], r.cauchy.g[k]);
        f << buf;
      }
    }
  }
}

}  // namespace torflux
