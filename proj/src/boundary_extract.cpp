#include "torflux/boundary_extract.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "torflux/errors.hpp"

namespace torflux {

namespace {

// Quadratic surface fit psi ~ c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2
// over a node neighborhood, centered at `center` for conditioning.
struct QuadFit {
  double c[6];
  bool ok = false;
};

QuadFit fit_quadratic(const FemField& field, Vec2 center, const std::vector<int>& nodes) {
  QuadFit qf{};
  if (nodes.size() < 8) return qf;
  Eigen::MatrixXd A(nodes.size(), 6);
  Eigen::VectorXd y(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    Vec2 d = field.mesh().nodes[nodes[k]] - center;
    A(k, 0) = 1.0;
    A(k, 1) = d.r;
    A(k, 2) = d.z;
    A(k, 3) = d.r * d.r;
    A(k, 4) = d.r * d.z;
    A(k, 5) = d.z * d.z;
    y[k] = field.values()[nodes[k]];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < 6) return qf;
  Eigen::VectorXd c = qr.solve(y);
  for (int i = 0; i < 6; ++i) qf.c[i] = c[i];
  qf.ok = true;
  return qf;
}

// Critical point of the fitted quadratic (relative to the fit center) and
// the Hessian determinant.
struct CritPoint {
  Vec2 d;
  double det = 0.0;
  double psi = 0.0;
  bool ok = false;
};

CritPoint critical_point(const QuadFit& qf) {
  CritPoint cp{};
  if (!qf.ok) return cp;
  double hxx = 2.0 * qf.c[3], hxy = qf.c[4], hyy = 2.0 * qf.c[5];
  cp.det = hxx * hyy - hxy * hxy;
  if (std::abs(cp.det) < 1e-300) return cp;
  // solve H d = -grad(0) with grad(0) = (c1, c2)
  cp.d.r = (-qf.c[1] * hyy + qf.c[2] * hxy) / cp.det;
  cp.d.z = (-qf.c[2] * hxx + qf.c[1] * hxy) / cp.det;
  cp.psi = qf.c[0] + qf.c[1] * cp.d.r + qf.c[2] * cp.d.z + qf.c[3] * cp.d.r * cp.d.r +
           qf.c[4] * cp.d.r * cp.d.z + qf.c[5] * cp.d.z * cp.d.z;
  cp.ok = true;
  return cp;
}

}  // namespace

std::vector<SaddlePoint> find_xpoints(const FemField& field) {
  const TriMesh& mesh = field.mesh();
  int N = mesh.n_nodes();

  // node adjacency
  std::vector<std::vector<int>> adj(N);
  for (const auto& t : mesh.triangles)
    for (int i = 0; i < 3; ++i) {
      int a = t[i], b = t[(i + 1) % 3];
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
  for (auto& v : adj) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  std::vector<bool> boundary(N, false);
  for (int i : mesh.inner_nodes) boundary[i] = true;
  for (int i : mesh.outer_nodes) boundary[i] = true;

  auto two_ring = [&](int n0) {
    std::set<int> s;
    s.insert(n0);
    for (int a : adj[n0]) {
      s.insert(a);
      for (int b : adj[a]) s.insert(b);
    }
    return std::vector<int>(s.begin(), s.end());
  };

  // Discrete prefilter: around a saddle node the sign of (psi_nb - psi_node)
  // alternates at least four times over the angularly ordered one-ring.
  auto discrete_saddle = [&](int n0) {
    std::vector<std::pair<double, double>> ring;  // (angle, sign diff)
    for (int a : adj[n0]) {
      Vec2 d = mesh.nodes[a] - mesh.nodes[n0];
      ring.emplace_back(std::atan2(d.z, d.r), field.values()[a] - field.values()[n0]);
    }
    std::sort(ring.begin(), ring.end());
    int flips = 0;
    double scale = 0.0;
    for (const auto& [ang, dv] : ring) scale = std::max(scale, std::abs(dv));
    for (std::size_t i = 0; i < ring.size(); ++i) {
      double a = ring[i].second, b = ring[(i + 1) % ring.size()].second;
      if (std::abs(a) < 1e-13 * scale || std::abs(b) < 1e-13 * scale) return true;
      if ((a > 0) != (b > 0)) ++flips;
    }
    return flips >= 4;
  };

  std::vector<SaddlePoint> raw;
  for (int n0 = 0; n0 < N; ++n0) {
    if (boundary[n0]) continue;
    bool near_boundary = false;
    for (int a : adj[n0]) near_boundary |= boundary[a];
    if (near_boundary) continue;
    if (!discrete_saddle(n0)) continue;

    std::vector<int> patch = two_ring(n0);
    // patch radius for the acceptance window
    double rad = 0.0;
    for (int k : patch) rad = std::max(rad, (mesh.nodes[k] - mesh.nodes[n0]).norm());

    Vec2 center = mesh.nodes[n0];
    QuadFit qf = fit_quadratic(field, center, patch);
    CritPoint cp = critical_point(qf);
    if (!cp.ok || cp.det >= 0.0) continue;      // not a saddle
    if (cp.d.norm() > 0.75 * rad) continue;     // critical point outside the patch

    // refine once: re-center the fit on the candidate location
    Vec2 pos = center + cp.d;
    QuadFit qf2 = fit_quadratic(field, pos, patch);
    CritPoint cp2 = critical_point(qf2);
    if (cp2.ok && cp2.det < 0.0 && cp2.d.norm() < 0.75 * rad) {
      pos += cp2.d;
      cp.psi = cp2.psi;
    }
    if (!field.find_triangle(pos)) continue;  // fell outside the mesh
    raw.push_back({pos, cp.psi});
  }

  // deduplicate: cluster within a few local edge lengths, keep the average
  double edge_scale = 0.0;
  {
    std::vector<double> lens;
    for (const auto& t : mesh.triangles)
      lens.push_back((mesh.nodes[t[0]] - mesh.nodes[t[1]]).norm());
    std::nth_element(lens.begin(), lens.begin() + lens.size() / 2, lens.end());
    edge_scale = lens[lens.size() / 2];
  }
  std::vector<SaddlePoint> out;
  std::vector<bool> used(raw.size(), false);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (used[i]) continue;
    SaddlePoint rep = raw[i];
    int count = 1;
    for (std::size_t j = i + 1; j < raw.size(); ++j) {
      if (used[j]) continue;
      if ((raw[j].pos - raw[i].pos).norm() < 4.0 * edge_scale) {
        rep.pos += raw[j].pos;
        rep.psi += raw[j].psi;
        used[j] = true;
        ++count;
      }
    }
    rep.pos = rep.pos / count;
    rep.psi /= count;
    out.push_back(rep);
  }
  return out;
}

PsiBoundary psi_boundary_value(const FemField& field, const Contour& limiter,
                               const std::vector<SaddlePoint>& saddles, double ip_sign,
                               Vec2 axis_hint) {
  if (ip_sign == 0.0) fail(ErrorCode::ZeroCurrent, "psi_boundary_value: zero plasma current");
  double sgn = ip_sign > 0 ? 1.0 : -1.0;

  // Limiter trace extremum on the plasma side: with I_p > 0 the flux
  // decreases outward from the axis, so the boundary value is the maximum.
  double psi_lim = -std::numeric_limits<double>::infinity();
  Vec2 touch{};
  int n = static_cast<int>(limiter.size());
  bool any = false;
  for (int i = 0; i < n; ++i) {
    Vec2 a = limiter.points[i], b = limiter.points[(i + 1) % n];
    int steps = std::max(2, static_cast<int>((b - a).norm() / 0.01));
    for (int k = 0; k <= steps; ++k) {
      Vec2 p = a + (b - a) * (static_cast<double>(k) / steps);
      auto v = field.try_eval(p);
      if (!v) continue;
      any = true;
      double val = sgn * *v;
      if (val > psi_lim) {
        psi_lim = val;
        touch = p;
      }
    }
  }
  if (!any)
    fail(ErrorCode::NoClosedContour, "limiter does not intersect the solution domain");
  psi_lim *= sgn;

  // Axis-side extremum over mesh nodes inside the limiter.
  double psi_axis = -std::numeric_limits<double>::infinity();
  const TriMesh& mesh = field.mesh();
  for (int i = 0; i < mesh.n_nodes(); ++i)
    if (limiter.contains(mesh.nodes[i]))
      psi_axis = std::max(psi_axis, sgn * field.values()[i]);
  psi_axis *= sgn;
  (void)axis_hint;

  PsiBoundary pb;
  pb.psi_b = psi_lim;
  pb.kind = BoundaryKind::Limiter;
  pb.touch = touch;

  // X-point candidates strictly between the limiter value and the axis side,
  // ordered outermost (closest to the limiter value) first.
  std::vector<SaddlePoint> cands;
  for (const auto& s : saddles)
    if (sgn * s.psi > sgn * psi_lim && sgn * s.psi < sgn * psi_axis) cands.push_back(s);
  std::sort(cands.begin(), cands.end(), [&](const SaddlePoint& a, const SaddlePoint& b) {
    return sgn * a.psi < sgn * b.psi;
  });
  pb.candidates = std::move(cands);
  if (!pb.candidates.empty()) {
    pb.psi_b = pb.candidates.front().psi;
    pb.kind = BoundaryKind::XPoint;
    pb.xpoint = pb.candidates.front().pos;
  }
  return pb;
}

// ---------------------------------------------------------------------------
// Iso-contour extraction (marching triangles on the P1 field)

namespace {

struct EdgeKey {
  int a, b;
  bool operator<(const EdgeKey& o) const { return a < o.a || (a == o.a && b < o.b); }
};

EdgeKey make_edge(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

struct Crossing {
  Vec2 p;
  std::vector<int> tris;  // triangles sharing this crossed edge
};

}  // namespace

std::vector<Vec2> extract_isocontour(const FemField& field, double level,
                                     const Contour& limiter, Vec2 inside_point, double tol,
                                     bool allow_limiter_closure, int n_out) {
  const TriMesh& mesh = field.mesh();
  const Eigen::VectorXd& psi = field.values();

  // Nudge the level off any exact node value to avoid degenerate crossings.
  double range = psi.maxCoeff() - psi.minCoeff();
  double lv = level;
  for (int i = 0; i < mesh.n_nodes(); ++i)
    if (psi[i] == lv) {
      lv += 1e-13 * std::max(range, 1.0);
      break;
    }

  // Crossed edges and their interpolated points.
  std::map<EdgeKey, int> edge_index;
  std::vector<Crossing> crossings;
  std::vector<std::array<int, 2>> tri_cross(mesh.n_triangles(), {-1, -1});
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    int local[3];
    int cnt = 0;
    for (int e = 0; e < 3; ++e) {
      int a = tri[e], b = tri[(e + 1) % 3];
      double va = psi[a] - lv, vb = psi[b] - lv;
      if ((va > 0) == (vb > 0)) continue;
      EdgeKey key = make_edge(a, b);
      auto it = edge_index.find(key);
      int idx;
      if (it == edge_index.end()) {
        double s = va / (va - vb);
        Vec2 p = mesh.nodes[a] + (mesh.nodes[b] - mesh.nodes[a]) * s;
        idx = static_cast<int>(crossings.size());
        crossings.push_back({p, {}});
        edge_index.emplace(key, idx);
      } else {
        idx = it->second;
      }
      crossings[idx].tris.push_back(t);
      if (cnt < 2) local[cnt] = idx;
      ++cnt;
    }
    if (cnt == 2) {
      tri_cross[t] = {local[0], local[1]};
    }
  }

  if (crossings.empty())
    fail(ErrorCode::NoClosedContour, "iso-contour level outside the field range");

  // Chain crossings through triangles.
  std::vector<bool> tri_used(mesh.n_triangles(), false);
  std::vector<std::vector<int>> chains;
  std::vector<bool> chain_closed;

  auto other_cross = [&](int t, int c) {
    return tri_cross[t][0] == c ? tri_cross[t][1] : tri_cross[t][0];
  };

  for (int t0 = 0; t0 < mesh.n_triangles(); ++t0) {
    if (tri_used[t0] || tri_cross[t0][0] < 0) continue;
    // walk in both directions from this triangle
    std::vector<int> chain{tri_cross[t0][0], tri_cross[t0][1]};
    tri_used[t0] = true;
    bool closed = false;
    for (int dir = 0; dir < 2; ++dir) {
      while (true) {
        int tail = chain.back();
        int next_t = -1;
        for (int t : crossings[tail].tris)
          if (!tri_used[t] && tri_cross[t][0] >= 0) {
            next_t = t;
            break;
          }
        if (next_t < 0) break;
        tri_used[next_t] = true;
        int nc = other_cross(next_t, tail);
        if (nc == chain.front()) {
          closed = true;
          break;
        }
        chain.push_back(nc);
      }
      if (closed || dir == 1) break;
      std::reverse(chain.begin(), chain.end());
    }
    chains.push_back(std::move(chain));
    chain_closed.push_back(closed);
  }

  // Winding number of closed polyline around a point.
  auto winds_around = [](const std::vector<Vec2>& poly, Vec2 p) {
    double total = 0.0;
    std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      Vec2 a = poly[i] - p, b = poly[(i + 1) % n] - p;
      total += std::atan2(a.cross(b), a.dot(b));
    }
    return std::abs(total) > 3.0;
  };
  auto within_limiter = [&](const std::vector<Vec2>& poly) {
    for (const auto& p : poly)
      if (!limiter.contains(p) && point_polyline_distance(p, limiter.points) > tol)
        return false;
    return true;
  };

  // Prefer closed chains that encircle the inside point within the limiter.
  const std::vector<int>* best = nullptr;
  double best_len = -1.0;
  std::vector<Vec2> poly;
  for (std::size_t k = 0; k < chains.size(); ++k) {
    if (!chain_closed[k] || chains[k].size() < 3) continue;
    poly.clear();
    for (int c : chains[k]) poly.push_back(crossings[c].p);
    if (!winds_around(poly, inside_point)) continue;
    if (!within_limiter(poly)) continue;
    double len = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i)
      len += (poly[(i + 1) % poly.size()] - poly[i]).norm();
    if (len > best_len) {
      best_len = len;
      best = &chains[k];
    }
  }

  std::vector<Vec2> result;
  if (best) {
    for (int c : *best) result.push_back(crossings[c].p);
  } else if (allow_limiter_closure) {
    // Close an open chain along the limiter: both endpoints near the limiter,
    // connect with the limiter arc that yields a loop around the inside point.
    for (std::size_t k = 0; k < chains.size() && result.empty(); ++k) {
      if (chain_closed[k] || chains[k].size() < 8) continue;
      poly.clear();
      for (int c : chains[k]) poly.push_back(crossings[c].p);
      Vec2 pa = poly.front(), pb = poly.back();
      if (point_polyline_distance(pa, limiter.points) > tol ||
          point_polyline_distance(pb, limiter.points) > tol)
        continue;
      // limiter arc from b to a, either way round; pick the closure that winds
      std::vector<Vec2> lim_dense = resample_closed(limiter.points, 512);
      auto nearest_idx = [&](Vec2 p) {
        int bi = 0;
        double bd = 1e300;
        for (int i = 0; i < 512; ++i) {
          double d = (lim_dense[i] - p).norm();
          if (d < bd) {
            bd = d;
            bi = i;
          }
        }
        return bi;
      };
      int ia = nearest_idx(pa), ib = nearest_idx(pb);
      for (int dir = 0; dir < 2; ++dir) {
        std::vector<Vec2> cand = poly;
        int i = ib;
        while (i != ia) {
          cand.push_back(lim_dense[i]);
          i = dir == 0 ? (i + 1) % 512 : (i + 511) % 512;
        }
        if (winds_around(cand, inside_point) && within_limiter(cand)) {
          result = std::move(cand);
          break;
        }
      }
    }
  }

  if (result.size() < 3)
    fail(ErrorCode::NoClosedContour, "no closed iso-contour encircles the plasma");

  if (polygon_area(result) < 0) std::reverse(result.begin(), result.end());
  std::vector<Vec2> out = resample_closed(result, n_out);
  out.push_back(out.front());
  return out;
}

PlasmaBoundary extract_boundary(const FemField& field, const Contour& limiter,
                                const CurrentCenter& cc) {
  return extract_boundary(field, limiter, cc, find_xpoints(field));
}

PlasmaBoundary extract_boundary(const FemField& field, const Contour& limiter,
                                const CurrentCenter& cc, const std::vector<SaddlePoint>& saddles) {
  Vec2 axis{cc.r_c, cc.z_c};
  PsiBoundary pb = psi_boundary_value(field, limiter, saddles, cc.i_p, axis);

  // The level passed to the contour extractor is nudged toward the axis side:
  // extracting exactly at a saddle level is degenerate for P1 fields.
  double sgn = cc.i_p > 0 ? 1.0 : -1.0;
  const Eigen::VectorXd& psi = field.values();
  double range = psi.maxCoeff() - psi.minCoeff();
  double nudge = 1e-4 * range;
  double tol = 0.05;  // limiter containment tolerance, ~mesh scale

  PlasmaBoundary out;
  std::string last_err = "no admissible level";
  auto try_level = [&](double level, bool allow_closure) {
    for (double lv : {level + sgn * nudge, level + sgn * 4.0 * nudge}) {
      try {
        out.points = extract_isocontour(field, lv, limiter, axis, tol, allow_closure);
        out.psi_b = level;
        return true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoClosedContour) throw;
        last_err = e.what();
      }
    }
    return false;
  };

  // X-point candidates outermost first, each validated by a closed-contour
  // test; fall back to the limiter value when none closes.
  for (const auto& cand : pb.candidates) {
    if (try_level(cand.psi, false)) {
      out.kind = BoundaryKind::XPoint;
      out.xpoint = cand.pos;
      return out;
    }
  }
  PsiBoundary lim = psi_boundary_value(field, limiter, {}, cc.i_p, axis);
  if (try_level(lim.psi_b, true)) {
    out.kind = BoundaryKind::Limiter;
    out.xpoint.reset();
    return out;
  }
  fail(ErrorCode::NoClosedContour, last_err);
}

}  // namespace torflux
