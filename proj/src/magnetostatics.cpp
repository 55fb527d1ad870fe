#include "torflux/magnetostatics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "torflux/errors.hpp"

namespace torflux {

EllipticKE ellip_KE(double m) {
  if (!(m >= 0.0) || m >= 1.0)
    fail(ErrorCode::DomainError, "ellip_KE: parameter m must be in [0, 1)");
  double a = 1.0, b = std::sqrt(1.0 - m);
  double c2sum = 0.5 * m;  // 2^{-1} c_0^2 with c_0 = k
  double pow2 = 1.0;       // 2^{n-1} for n = 1, 2, ...
  for (int it = 0; it < 60; ++it) {
    double c = 0.5 * (a - b);
    double an = 0.5 * (a + b);
    double bn = std::sqrt(a * b);
    a = an;
    b = bn;
    c2sum += pow2 * c * c;
    pow2 *= 2.0;
    if (c < 1e-17 * a) break;
  }
  double K = 1.5707963267948966 / a;
  return {K, K * (1.0 - c2sum)};
}

double psi_filament(const Filament& f, Vec2 p) {
  if (p.r < 0.0) fail(ErrorCode::AxisDomain, "psi_filament: point has r < 0");
  double dz = p.z - f.z;
  double d2 = (p.r - f.r) * (p.r - f.r) + dz * dz;
  if (d2 < 1e-20) fail(ErrorCode::FilamentSingularity, "psi_filament: point on filament ring");
  double Q = (p.r + f.r) * (p.r + f.r) + dz * dz;
  double m = 4.0 * p.r * f.r / Q;
  auto [K, E] = ellip_KE(std::min(m, 1.0 - 1e-16));
  // mu0 I / (2 pi) * sqrt(Q) * [(1 - m/2) K - E]; exactly zero on the axis.
  return MU0 * f.current / (2.0 * 3.14159265358979323846) * std::sqrt(Q) *
         ((1.0 - 0.5 * m) * K - E);
}

Vec2 B_filament(const Filament& f, Vec2 p) {
  if (p.r < 0.0) fail(ErrorCode::AxisDomain, "B_filament: point has r < 0");
  double dz = p.z - f.z;
  double den = (p.r - f.r) * (p.r - f.r) + dz * dz;
  if (den < 1e-20) fail(ErrorCode::FilamentSingularity, "B_filament: point on filament ring");
  double Q = (p.r + f.r) * (p.r + f.r) + dz * dz;
  double pref = MU0 * f.current / (2.0 * 3.14159265358979323846) / std::sqrt(Q);
  if (p.r < 1e-12) {
    // On-axis limit: B_r = 0, B_z from the standard loop formula.
    double bz = MU0 * f.current * f.r * f.r / (2.0 * std::pow(f.r * f.r + dz * dz, 1.5));
    return {0.0, bz};
  }
  double m = 4.0 * p.r * f.r / Q;
  auto [K, E] = ellip_KE(std::min(m, 1.0 - 1e-16));
  double br = pref * dz / p.r * (-K + (p.r * p.r + f.r * f.r + dz * dz) / den * E);
  double bz = pref * (K + (f.r * f.r - p.r * p.r - dz * dz) / den * E);
  return {br, bz};
}

CoilSet CoilSet::from_groups(
    const std::vector<std::pair<std::string, std::vector<Filament>>>& groups) {
  CoilSet cs;
  for (const auto& [label, fils] : groups) {
    CoilRange r;
    r.label = label;
    r.first = static_cast<int>(cs.filaments.size());
    r.count = static_cast<int>(fils.size());
    cs.filaments.insert(cs.filaments.end(), fils.begin(), fils.end());
    cs.coils.push_back(std::move(r));
  }
  cs.validate();
  return cs;
}

void CoilSet::validate() const {
  std::set<std::string> seen;
  int next = 0;
  for (const auto& c : coils) {
    if (c.label.empty()) fail(ErrorCode::GeometryError, "coil with empty label");
    if (!seen.insert(c.label).second)
      fail(ErrorCode::GeometryError, "duplicate coil label '" + c.label + "'");
    if (c.first != next || c.count < 0)
      fail(ErrorCode::GeometryError, "coil ranges must tile the filament list in order");
    next += c.count;
  }
  if (next != static_cast<int>(filaments.size()))
    fail(ErrorCode::GeometryError, "coil ranges do not cover the filament list");
}

double psi_filaments(const std::vector<Filament>& fs, Vec2 p) {
  double s = 0.0;
  for (const auto& f : fs) s += psi_filament(f, p);
  return s;
}

Vec2 B_filaments(const std::vector<Filament>& fs, Vec2 p) {
  Vec2 b;
  for (const auto& f : fs) b += B_filament(f, p);
  return b;
}

double psi_coils(const CoilSet& cs, Vec2 p) { return psi_filaments(cs.filaments, p); }

Vec2 B_coils(const CoilSet& cs, Vec2 p) { return B_filaments(cs.filaments, p); }

CoilSet CoilSet::scaled_by(const std::map<std::string, double>& currents) const {
  CoilSet out = *this;
  for (const auto& c : coils) {
    auto it = currents.find(c.label);
    if (it == currents.end())
      fail(ErrorCode::MissingCurrent, "no current supplied for coil '" + c.label + "'");
    for (int i = c.first; i < c.first + c.count; ++i) out.filaments[i].current *= it->second;
  }
  return out;
}

}  // namespace torflux
