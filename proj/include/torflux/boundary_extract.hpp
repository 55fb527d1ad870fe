#pragma once

#include <optional>
#include <vector>

#include "torflux/annulus_fem.hpp"
#include "torflux/geometry.hpp"

namespace torflux {

// Candidate field saddle (X-point) from local quadratic fits.
struct SaddlePoint {
  Vec2 pos;
  double psi = 0.0;
};

// Saddle candidates over interior mesh nodes: least-squares quadratic on the
// two-ring node neighborhood, kept when the Hessian is indefinite and the
// critical point lies within the patch. Deduplicated, refined by re-centering.
std::vector<SaddlePoint> find_xpoints(const FemField& field);

enum class BoundaryKind { Limiter, XPoint };

struct PsiBoundary {
  double psi_b = 0.0;               // boundary flux value
  BoundaryKind kind = BoundaryKind::Limiter;
  std::optional<Vec2> xpoint;
  Vec2 touch;                       // limiter touch point (limiter case)
  std::vector<SaddlePoint> candidates;  // admissible saddles, outermost first
};

// Boundary flux: the limiter-trace extremum on the plasma side of the flux
// ordering (sign of I_p), overridden by the outermost X-point whose flux lies
// strictly between the limiter value and the axis-side extremum and whose
// level curve closes inside the limiter.
PsiBoundary psi_boundary_value(const FemField& field, const Contour& limiter,
                               const std::vector<SaddlePoint>& saddles, double ip_sign,
                               Vec2 axis_hint);

// Closed iso-contour of the P1 field at `level` that encircles
// `inside_point` and stays within the limiter (with tolerance `tol`).
// Open chains may be closed along the limiter when `allow_limiter_closure`.
// Result is resampled to n_out points, CCW, first point repeated at the end.
std::vector<Vec2> extract_isocontour(const FemField& field, double level,
                                     const Contour& limiter, Vec2 inside_point,
                                     double tol, bool allow_limiter_closure,
                                     int n_out = 256);

struct PlasmaBoundary {
  std::vector<Vec2> points;  // closed: first == last
  double psi_b = 0.0;
  BoundaryKind kind = BoundaryKind::Limiter;
  std::optional<Vec2> xpoint;
};

// Full extraction: saddles, boundary flux, iso-contour.
PlasmaBoundary extract_boundary(const FemField& field, const Contour& limiter,
                                const CurrentCenter& cc);

// Same, with caller-supplied saddle candidates (e.g. externally refined or
// filtered ones) instead of find_xpoints(field).
PlasmaBoundary extract_boundary(const FemField& field, const Contour& limiter,
                                const CurrentCenter& cc, const std::vector<SaddlePoint>& saddles);

}  // namespace torflux
