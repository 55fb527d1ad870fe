#include "torflux/machine.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "torflux/errors.hpp"

namespace torflux {

using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

json vec2_to_json(Vec2 v) { return json{{"r", v.r}, {"z", v.z}}; }

Vec2 vec2_from_json(const json& j) {
  if (!j.contains("r") || !j.contains("z"))
    fail(ErrorCode::ConfigError, "point needs 'r' and 'z'");
  return {j.at("r").get<double>(), j.at("z").get<double>()};
}

json points_to_json(const std::vector<Vec2>& pts) {
  json a = json::array();
  for (Vec2 p : pts) a.push_back(vec2_to_json(p));
  return a;
}

std::vector<Vec2> points_from_json(const json& j) {
  std::vector<Vec2> out;
  for (const auto& e : j) out.push_back(vec2_from_json(e));
  return out;
}

}  // namespace

std::string MachineDescription::to_json_string() const {
  json j;
  j["name"] = name;
  json probes = json::array();
  for (const auto& p : sensors.probes)
    probes.push_back(json{{"pos", vec2_to_json(p.pos)}, {"dir", vec2_to_json(p.dir)}});
  json loops = json::array();
  for (const auto& f : sensors.flux_loops) loops.push_back(json{{"pos", vec2_to_json(f.pos)}});
  json saddles = json::array();
  for (const auto& s : sensors.saddle_loops)
    saddles.push_back(json{{"pos_a", vec2_to_json(s.pos_a)}, {"pos_b", vec2_to_json(s.pos_b)}});
  j["sensors"] = json{{"probes", probes}, {"flux_loops", loops}, {"saddle_loops", saddles}};

  json coils_j = json::array();
  for (const auto& c : coils.coils) {
    json fils = json::array();
    for (int i = c.first; i < c.first + c.count; ++i) {
      const auto& f = coils.filaments[i];
      fils.push_back(json{{"r", f.r}, {"z", f.z}, {"turns", f.current}});
    }
    coils_j.push_back(json{{"label", c.label}, {"filaments", fils}});
  }
  j["coils"] = coils_j;
  j["limiter"] = points_to_json(limiter.points);
  json go;
  if (!gamma_o.points.empty()) go["points"] = points_to_json(gamma_o.points);
  go["offset"] = gamma_o.offset;
  go["n_points"] = gamma_o.n_points;
  j["gamma_o"] = go;
  return j.dump(2);
}

MachineDescription MachineDescription::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, std::string("machine JSON parse error: ") + e.what());
  }
  try {
    MachineDescription m;
    m.name = j.value("name", "unnamed");
    const json& s = j.at("sensors");
    for (const auto& p : s.value("probes", json::array())) {
      MagneticProbe pr;
      pr.pos = vec2_from_json(p.at("pos"));
      pr.dir = vec2_from_json(p.at("dir"));
      // Normalize sloppy directions, but keep unit vectors bit-exact so the
      // content hash is stable across save/load round trips.
      if (std::abs(pr.dir.dot(pr.dir) - 1.0) > 1e-9) pr.dir = pr.dir.normalized();
      m.sensors.probes.push_back(pr);
    }
    for (const auto& p : s.value("flux_loops", json::array()))
      m.sensors.flux_loops.push_back({vec2_from_json(p.at("pos"))});
    for (const auto& p : s.value("saddle_loops", json::array()))
      m.sensors.saddle_loops.push_back(
          {vec2_from_json(p.at("pos_a")), vec2_from_json(p.at("pos_b"))});

    std::vector<std::pair<std::string, std::vector<Filament>>> groups;
    for (const auto& c : j.value("coils", json::array())) {
      std::vector<Filament> fils;
      for (const auto& f : c.at("filaments"))
        fils.push_back({f.at("r").get<double>(), f.at("z").get<double>(),
                        f.value("turns", 1.0)});
      groups.emplace_back(c.at("label").get<std::string>(), std::move(fils));
    }
    m.coils = CoilSet::from_groups(groups);
    m.limiter = Contour::from_points(points_from_json(j.at("limiter")));
    if (j.contains("gamma_o")) {
      const json& go = j.at("gamma_o");
      if (go.contains("points")) m.gamma_o.points = points_from_json(go.at("points"));
      m.gamma_o.offset = go.value("offset", 0.05);
      m.gamma_o.n_points = go.value("n_points", 128);
    }
    if (m.sensors.count() == 0)
      fail(ErrorCode::ConfigError, "machine has no sensors");
    if (m.gamma_o.n_points < 16)
      fail(ErrorCode::ConfigError, "gamma_o needs at least 16 points");
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("machine JSON structure error: ") + e.what());
  }
}

Contour MachineDescription::gamma_o_contour() const {
  if (!gamma_o.points.empty())
    return Contour::from_points(resample_closed(gamma_o.points, gamma_o.n_points));
  return build_gamma_o(sensors, gamma_o.offset, gamma_o.n_points);
}

std::string MachineDescription::hash() const {
  std::string canon = to_json_string();
  std::uint64_t h = fnv1a64(canon.data(), canon.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

MachineDescription MachineDescription::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open machine file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

void MachineDescription::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write machine file: " + path);
  out << to_json_string() << "\n";
}

}  // namespace torflux
