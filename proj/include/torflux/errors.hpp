#pragma once

#include <stdexcept>
#include <string>

namespace torflux {

enum class ErrorCode {
  PoleSingularity,        // evaluation point coincides with the expansion pole
  AxisDomain,             // evaluation point at or left of the symmetry axis (r <= 0)
  DomainError,            // scalar argument outside a function's domain
  FilamentSingularity,    // field requested on a filament ring
  MissingCurrent,         // coil label present but no current supplied
  ZeroCurrent,            // net plasma current below threshold, centroid undefined
  RankDeficient,          // least-squares system numerically rank deficient
  PoleOutsideHull,        // expansion pole not enclosed by the data contour
  GeometryError,          // degenerate/self-intersecting contour, failed offset, bad ray cast
  MeshQualityError,       // generated mesh violates the minimum-angle bound
  SingularMatrix,         // sparse factorization failed / nonpositive pivot
  SingularControlSystem,  // control operator not positive definite
  EmptyBank,              // mesh bank has no entries
  NoClosedContour,        // iso-contour extraction found no admissible closed curve
  VersionMismatch,        // cache file magic/version not recognized
  CacheMismatch,          // cache built for a different machine/configuration
  IoError,                // file missing/unreadable/unwritable
  ConfigError,            // invalid configuration value
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

}  // namespace torflux
