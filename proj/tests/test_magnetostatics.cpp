#include "torflux/magnetostatics.hpp"

#include <cmath>

#include "doctest.h"
#include "support/fd_checks.hpp"
#include "support/quadrature.hpp"
#include "torflux/errors.hpp"

using namespace torflux;

TEST_CASE("complete elliptic integrals against quadrature") {
  // K(m) = int_0^{pi/2} dt / sqrt(1 - m sin^2 t), E likewise with sqrt above.
  for (double m : {0.0, 0.1, 0.5, 0.9, 0.99}) {
    auto [K, E] = ellip_KE(m);
    double Kq = testsupport::integrate(
        [m](double t) { return 1.0 / std::sqrt(1.0 - m * std::sin(t) * std::sin(t)); }, 0.0,
        M_PI / 2);
    double Eq = testsupport::integrate(
        [m](double t) { return std::sqrt(1.0 - m * std::sin(t) * std::sin(t)); }, 0.0,
        M_PI / 2);
    CHECK(K == doctest::Approx(Kq).epsilon(1e-13));
    CHECK(E == doctest::Approx(Eq).epsilon(1e-13));
  }
  CHECK(ellip_KE(0.0).K == doctest::Approx(M_PI / 2));
  CHECK_THROWS_AS(ellip_KE(1.0), Error);
  CHECK_THROWS_AS(ellip_KE(-0.1), Error);
}

TEST_CASE("filament field is the rotated flux gradient") {
  Filament f{2.0, 0.3, 1.0e5};
  for (Vec2 p : {Vec2{1.2, 0.1}, Vec2{2.8, -0.6}, Vec2{2.2, 1.4}, Vec2{0.4, 0.0}}) {
    const double h = 1e-5;
    auto psi = [&](Vec2 q) { return psi_filament(f, q); };
    Vec2 g = testsupport::fd_gradient(psi, p, h);
    Vec2 B = B_filament(f, p);
    CHECK(B.r == doctest::Approx(-g.z / p.r).epsilon(1e-7));
    CHECK(B.z == doctest::Approx(g.r / p.r).epsilon(1e-7));
  }
}

TEST_CASE("filament flux solves the vacuum equation away from the ring") {
  Filament f{2.0, 0.0, 1.0e5};
  auto psi = [&](Vec2 q) { return psi_filament(f, q); };
  for (Vec2 p : {Vec2{1.1, 0.4}, Vec2{2.9, 0.8}, Vec2{2.0, 1.5}}) {
    double scale = std::abs(psi(p));
    CHECK(std::abs(testsupport::fd_flux_operator(psi, p, 1e-3)) * p.r < 1e-4 * scale);
  }
}

TEST_CASE("on-axis field matches the textbook loop formula") {
  Filament f{1.5, 0.0, 2.0e4};
  for (double z : {-0.8, 0.0, 1.2}) {
    Vec2 B = B_filament(f, {0.0, z});
    double expect = MU0 * f.current * f.r * f.r /
                    (2.0 * std::pow(f.r * f.r + z * z, 1.5));
    CHECK(B.r == doctest::Approx(0.0));
    CHECK(B.z == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(psi_filament(f, {0.0, 0.5}) == doctest::Approx(0.0));
}

TEST_CASE("flux function equals the integrated vertical field") {
  // With B_z = (1/r) dpsi/dr and psi = 0 on the axis, the flux function at
  // (r, z) is the radial integral of s B_z(s, z): check against quadrature.
  Filament f{2.0, 0.0, 1.0e5};
  double r = 1.1, z = 0.7;
  double flux = testsupport::integrate(
      [&](double s) { return B_filament(f, {s, z}).z * s; }, 1e-9, r, 1e-11);
  CHECK(psi_filament(f, {r, z}) == doctest::Approx(flux).epsilon(1e-9));
}

TEST_CASE("filament singularity and domain guards") {
  Filament f{2.0, 0.0, 1.0e5};
  CHECK_THROWS_AS(psi_filament(f, {2.0, 0.0}), Error);
  CHECK_THROWS_AS(B_filament(f, {2.0, 0.0}), Error);
  CHECK_THROWS_AS(psi_filament(f, {-0.1, 0.0}), Error);
  try {
    psi_filament(f, {2.0, 0.0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FilamentSingularity);
  }
}

TEST_CASE("coil set grouping, validation and scaling") {
  CoilSet cs = CoilSet::from_groups({
      {"A", {{1.0, 1.0, 2.0}, {1.1, 1.0, 2.0}}},
      {"B", {{3.0, -1.0, 5.0}}},
  });
  CHECK(cs.filaments.size() == 3);
  CHECK(cs.coils.size() == 2);

  CoilSet scaled = cs.scaled_by({{"A", 10.0}, {"B", -2.0}});
  CHECK(scaled.filaments[0].current == doctest::Approx(20.0));
  CHECK(scaled.filaments[2].current == doctest::Approx(-10.0));

  CHECK_THROWS_AS(cs.scaled_by({{"A", 1.0}}), Error);
  try {
    cs.scaled_by({{"A", 1.0}});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingCurrent);
  }

  Vec2 p{2.0, 0.5};
  double direct = 0;
  for (const auto& fil : scaled.filaments) direct += psi_filament(fil, p);
  CHECK(psi_coils(scaled, p) == doctest::Approx(direct));
}

TEST_CASE("superposition of filament bundles") {
  std::vector<Filament> fs{{1.8, -0.2, 3e4}, {2.2, 0.1, -1e4}, {2.0, 0.4, 2e4}};
  Vec2 p{2.6, 0.9};
  double sum = 0;
  Vec2 bsum;
  for (const auto& f : fs) {
    sum += psi_filament(f, p);
    bsum += B_filament(f, p);
  }
  CHECK(psi_filaments(fs, p) == doctest::Approx(sum));
  CHECK(B_filaments(fs, p).r == doctest::Approx(bsum.r));
  CHECK(B_filaments(fs, p).z == doctest::Approx(bsum.z));
}
