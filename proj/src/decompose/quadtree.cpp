#include <algorithm>
#include <cmath>
#include <sstream>

#include "b2s/decompose.hpp"
#include "b2s/errors.hpp"

namespace b2s {

namespace {

constexpr int kSamplesPerPcurve = 2048;
constexpr int kBisections = 60;
constexpr int kMaxFlattenDepth = 24;
// Pieces shorter than this fraction of the pcurve domain are tangential
// touches of the cell (a tangency admits a run of about sqrt(eps)).
constexpr double kMinPieceFraction = 1e-7;

struct Rect {
  double u0, u1, v0, v1;
  bool contains(double u, double v) const { return u >= u0 && u <= u1 && v >= v0 && v <= v1; }
};

struct Segment2 {
  double ax, ay, bx, by;
};

// Liang-Barsky against the closed rectangle.
bool intersects(const Segment2& s, const Rect& r) {
  double t0 = 0.0;
  double t1 = 1.0;
  const double dx = s.bx - s.ax;
  const double dy = s.by - s.ay;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {s.ax - r.u0, r.u1 - s.ax, s.ay - r.v0, r.v1 - s.ay};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
    if (t0 > t1) return false;
  }
  return true;
}

struct PcurveSamples {
  const NurbsCurve* curve = nullptr;
  std::vector<double> t;
  std::vector<Vec3> pos;
};

struct TrimData {
  std::vector<Segment2> polyline;
  std::vector<PcurveSamples> pcurves;
  bool has_outer = false;
};

void flatten(const NurbsCurve& c, double a, double b, double tau, int depth, std::vector<Vec3>& out) {
  if (depth >= kMaxFlattenDepth || chord_to_arc(c, a, b) >= tau) {
    out.push_back(eval_curve(c, b));
    return;
  }
  const double mid = 0.5 * (a + b);
  flatten(c, a, mid, tau, depth + 1, out);
  flatten(c, mid, b, tau, depth + 1, out);
}

TrimData prepare(const NurbsSurface& surface, double tau) {
  TrimData data;
  for (const auto& loop : surface.trim_loops()) {
    if (loop.orientation == LoopOrientation::kOuter) data.has_outer = true;
    std::vector<Vec3> vertices;
    for (const auto& pc : loop.pcurves) {
      vertices.push_back(eval_curve(pc, pc.domain_start()));
      double lo = pc.domain_start();
      std::vector<double> breaks;
      for (const auto& [k, m] : pc.knots().interior_knots()) breaks.push_back(k);
      breaks.push_back(pc.domain_end());
      for (double hi : breaks) {
        flatten(pc, lo, hi, tau, 0, vertices);
        lo = hi;
      }

      PcurveSamples ps;
      ps.curve = &pc;
      const double a = pc.domain_start();
      const double b = pc.domain_end();
      for (int k = 0; k <= kSamplesPerPcurve; ++k) {
        const double t = k == kSamplesPerPcurve ? b : a + (b - a) * k / kSamplesPerPcurve;
        ps.t.push_back(t);
        ps.pos.push_back(eval_curve(pc, t));
      }
      data.pcurves.push_back(std::move(ps));
    }
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const Vec3& p = vertices[i];
      const Vec3& q = vertices[(i + 1) % vertices.size()];
      data.polyline.push_back({p.x, p.y, q.x, q.y});
    }
  }
  return data;
}

// Even-odd crossing count of a +u ray from (u, v).
bool inside_trim(const TrimData& data, double u, double v) {
  bool odd = !data.has_outer;
  for (const auto& s : data.polyline) {
    if ((s.ay > v) != (s.by > v)) {
      const double x = s.ax + (v - s.ay) * (s.bx - s.ax) / (s.by - s.ay);
      if (x > u) odd = !odd;
    }
  }
  return odd;
}

struct Piece {
  const NurbsCurve* curve;
  double t0, t1;
};

// Boundary between an outside sample at `out_t` and an inside one at `in_t`.
double crossing(const NurbsCurve& c, const Rect& r, double out_t, double in_t) {
  for (int i = 0; i < kBisections; ++i) {
    const double mid = 0.5 * (out_t + in_t);
    const Vec3 p = eval_curve(c, mid);
    if (r.contains(p.x, p.y)) {
      in_t = mid;
    } else {
      out_t = mid;
    }
  }
  return in_t;
}

// Connected parameter intervals of each pcurve lying inside the cell.
std::vector<Piece> local_pieces(const TrimData& data, const Rect& r) {
  std::vector<Piece> pieces;
  for (const auto& ps : data.pcurves) {
    const std::size_t n = ps.t.size();
    const double min_len = kMinPieceFraction * (ps.t.back() - ps.t.front());
    std::size_t k = 0;
    while (k < n) {
      if (!r.contains(ps.pos[k].x, ps.pos[k].y)) {
        ++k;
        continue;
      }
      const std::size_t first = k;
      while (k + 1 < n && r.contains(ps.pos[k + 1].x, ps.pos[k + 1].y)) ++k;
      const std::size_t last = k;
      const double t0 = first == 0 ? ps.t[0] : crossing(*ps.curve, r, ps.t[first - 1], ps.t[first]);
      const double t1 = last + 1 == n ? ps.t[n - 1] : crossing(*ps.curve, r, ps.t[last + 1], ps.t[last]);
      if (t1 - t0 > min_len) pieces.push_back({ps.curve, t0, t1});
      ++k;
    }
  }
  return pieces;
}

void append_triangles(const NurbsSurface& surface, const QuadCell& cell, int entity,
                      std::vector<BezierTriangle>& out) {
  const NurbsSurface sub = restrict_surface(surface, cell.u0, cell.u1, cell.v0, cell.v1);
  for (const auto& rect : surface_to_bezier_rectangles(sub, entity).cells) {
    auto [lower, upper] = rectangle_to_triangles(rect);
    out.push_back(std::move(lower));
    out.push_back(std::move(upper));
  }
}

}  // namespace

QuadtreeResult quadtree_decompose(const NurbsSurface& surface, double tau, int max_depth, int entity) {
  if (!(tau > 0.9 && tau < 1.0)) {
    std::ostringstream os;
    os << "chord-to-arc threshold " << tau << " outside (0.9, 1)";
    throw ArgumentError(os.str());
  }
  if (max_depth < 1 || max_depth > 30) throw ArgumentError("max_depth must be in [1, 30]");

  const double ua = surface.knots_u().domain_start();
  const double ub = surface.knots_u().domain_end();
  const double va = surface.knots_v().domain_start();
  const double vb = surface.knots_v().domain_end();

  QuadtreeResult result;
  if (!surface.trimmed()) {
    result.cells.push_back({0, 0, 0, CellClass::kInterior, true, ua, ub, va, vb});
    for (const auto& rect : surface_to_bezier_rectangles(surface, entity).cells) {
      auto [lower, upper] = rectangle_to_triangles(rect);
      result.triangles.push_back(std::move(lower));
      result.triangles.push_back(std::move(upper));
    }
    return result;
  }

  const TrimData data = prepare(surface, tau);
  std::vector<Piece> leaf_pieces;

  struct Pending {
    int depth;
    std::uint32_t ix, iy;
  };
  std::vector<Pending> stack{{0, 0, 0}};
  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    const double n = std::ldexp(1.0, cur.depth);
    QuadCell cell;
    cell.depth = cur.depth;
    cell.ix = cur.ix;
    cell.iy = cur.iy;
    cell.u0 = ua + (ub - ua) * (cur.ix / n);
    cell.u1 = ua + (ub - ua) * ((cur.ix + 1) / n);
    cell.v0 = va + (vb - va) * (cur.iy / n);
    cell.v1 = va + (vb - va) * ((cur.iy + 1) / n);
    const Rect r{cell.u0, cell.u1, cell.v0, cell.v1};

    const bool crossed =
        std::any_of(data.polyline.begin(), data.polyline.end(), [&](const Segment2& s) { return intersects(s, r); });
    if (!crossed) {
      const bool in = inside_trim(data, 0.5 * (r.u0 + r.u1), 0.5 * (r.v0 + r.v1));
      cell.cls = in ? CellClass::kInterior : CellClass::kExterior;
      result.cells.push_back(cell);
      continue;
    }

    cell.cls = CellClass::kBoundary;
    const auto pieces = local_pieces(data, r);
    const bool refined = std::all_of(pieces.begin(), pieces.end(), [&](const Piece& p) {
      return chord_to_arc(*p.curve, p.t0, p.t1) >= tau;
    });
    if (!refined && cur.depth < max_depth) {
      // Pushed in reverse so children pop in (0,0), (1,0), (0,1), (1,1) order.
      for (int c = 3; c >= 0; --c) {
        stack.push_back({cur.depth + 1, 2 * cur.ix + static_cast<std::uint32_t>(c & 1),
                         2 * cur.iy + static_cast<std::uint32_t>(c >> 1)});
      }
      continue;
    }
    cell.converged = refined;
    if (!refined) result.unconverged.push_back(result.cells.size());
    result.cells.push_back(cell);
    leaf_pieces.insert(leaf_pieces.end(), pieces.begin(), pieces.end());
  }

  for (const auto& cell : result.cells) {
    if (cell.cls != CellClass::kExterior) append_triangles(surface, cell, entity, result.triangles);
  }

  // Boundary error over the piece breakpoints of each pcurve.
  BoundaryErrorReport& rep = result.report;
  for (const auto& ps : data.pcurves) {
    const NurbsCurve& c = *ps.curve;
    std::vector<double> breaks{c.domain_start(), c.domain_end()};
    for (const auto& p : leaf_pieces) {
      if (p.curve != &c) continue;
      breaks.push_back(p.t0);
      breaks.push_back(p.t1);
      rep.chord_to_arc.push_back(chord_to_arc(c, p.t0, p.t1));
      rep.curvature.push_back(curvature(c, 0.5 * (p.t0 + p.t1)));
      rep.max_step = std::max(rep.max_step, p.t1 - p.t0);
    }
    std::sort(breaks.begin(), breaks.end());
    const double tol = 1e-9 * (c.domain_end() - c.domain_start());
    std::vector<double> uniq;
    for (double t : breaks) {
      if (uniq.empty() || t - uniq.back() > tol) uniq.push_back(t);
    }
    uniq.back() = c.domain_end();
    if (uniq.size() < 2) continue;
    const BoundaryErrorReport part = boundary_rmse(c, uniq);
    rep.squared_error += part.squared_error;
    rep.arc_length += part.arc_length;
  }
  rep.rmse = rep.arc_length > 0.0 ? std::sqrt(rep.squared_error / rep.arc_length) : 0.0;
  return result;
}

}  // namespace b2s
