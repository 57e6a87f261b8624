#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "b2s/decompose.hpp"
#include "b2s/errors.hpp"

namespace b2s {

namespace {

// A B-spline "curve" whose control points are rows of `stride` homogeneous
// points. Surfaces refine along one direction by treating the other
// direction as the stride.
struct RawSpline {
  std::vector<double> knots;
  int degree = 0;
  std::vector<HomogeneousPoint> points;
  int stride = 1;

  int rows() const { return static_cast<int>(points.size()) / stride; }
  HomogeneousPoint& at(int r, int c) { return points[static_cast<std::size_t>(r * stride + c)]; }
  double tol() const { return 1e-10 * (knots.back() - knots.front()); }
};

// Returns the existing knot value within tolerance of u, or u itself.
double snap(const RawSpline& s, double u) {
  const double tol = s.tol();
  for (double k : s.knots) {
    if (std::abs(k - u) <= tol) return k;
  }
  return u;
}

int multiplicity(const RawSpline& s, double u) {
  return static_cast<int>(std::count(s.knots.begin(), s.knots.end(), u));
}

// One Boehm insertion of an already snapped value u.
void insert_once(RawSpline& s, double u) {
  const int p = s.degree;
  const int n = s.rows() - 1;
  const auto& U = s.knots;
  int k = static_cast<int>(std::upper_bound(U.begin(), U.end(), u) - U.begin()) - 1;
  k = std::min(k, n);
  const int mult = multiplicity(s, u);

  RawSpline out;
  out.degree = p;
  out.stride = s.stride;
  out.points.resize(static_cast<std::size_t>((n + 2) * s.stride));
  for (int i = 0; i <= n + 1; ++i) {
    for (int c = 0; c < s.stride; ++c) {
      HomogeneousPoint q;
      if (i <= k - p) {
        q = s.at(i, c);
      } else if (i <= k - mult) {
        const double alpha = (u - U[static_cast<std::size_t>(i)]) /
                             (U[static_cast<std::size_t>(i + p)] - U[static_cast<std::size_t>(i)]);
        q = s.at(i, c) * alpha + s.at(i - 1, c) * (1.0 - alpha);
      } else {
        q = s.at(i - 1, c);
      }
      out.at(i, c) = q;
    }
  }
  out.knots = U;
  out.knots.insert(out.knots.begin() + k + 1, u);
  s = std::move(out);
}

// Raises the multiplicity of u to `target` (no-op when already there).
double refine_to(RawSpline& s, double u, int target) {
  u = snap(s, u);
  while (multiplicity(s, u) < target) insert_once(s, u);
  return u;
}

// Every distinct interior knot raised to multiplicity p.
void refine_to_bezier(RawSpline& s) {
  const KnotVector kv(s.knots, s.degree);
  for (const auto& [u, mult] : kv.interior_knots()) {
    if (mult < s.degree) refine_to(s, u, s.degree);
  }
}

// Clamped restriction to [a, b].
RawSpline slice(RawSpline s, double a, double b) {
  const int p = s.degree;
  const double lo = s.knots[static_cast<std::size_t>(p)];
  const double hi = s.knots[s.knots.size() - 1 - static_cast<std::size_t>(p)];
  const double tol = s.tol();
  const bool cut_lo = a - lo > tol;
  const bool cut_hi = hi - b > tol;
  if (cut_lo) a = refine_to(s, a, p);
  if (cut_hi) b = refine_to(s, b, p);
  if (!cut_lo) a = lo;
  if (!cut_hi) b = hi;

  const auto& U = s.knots;
  int first = 0;
  int last = s.rows() - 1;
  if (cut_lo) first = static_cast<int>(std::lower_bound(U.begin(), U.end(), a) - U.begin()) - 1;
  if (cut_hi) last = static_cast<int>(std::lower_bound(U.begin(), U.end(), b) - U.begin()) - 1;

  RawSpline out;
  out.degree = p;
  out.stride = s.stride;
  out.knots.assign(static_cast<std::size_t>(p + 1), a);
  for (double k : U) {
    if (k > a && k < b) out.knots.push_back(k);
  }
  out.knots.insert(out.knots.end(), static_cast<std::size_t>(p + 1), b);
  out.points.assign(s.points.begin() + static_cast<std::ptrdiff_t>(first * s.stride),
                    s.points.begin() + static_cast<std::ptrdiff_t>((last + 1) * s.stride));
  if (out.rows() != static_cast<int>(out.knots.size()) - p - 1) {
    throw IntegrityError("sub-curve extraction produced an inconsistent control polygon");
  }
  return out;
}

RawSpline from_curve(const NurbsCurve& c) {
  return {c.knots().knots(), c.degree(), c.control_points(), 1};
}

NurbsCurve to_curve(RawSpline s) {
  return NurbsCurve(s.degree, std::move(s.knots), std::move(s.points));
}

std::vector<HomogeneousPoint> transpose(const std::vector<HomogeneousPoint>& net, int rows, int cols) {
  std::vector<HomogeneousPoint> out(net.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out[static_cast<std::size_t>(c * rows + r)] = net[static_cast<std::size_t>(r * cols + c)];
    }
  }
  return out;
}

// Surface as two raw splines sharing one net.
struct RawSurface {
  std::vector<double> knots_u, knots_v;
  int p = 0, q = 0;
  std::vector<HomogeneousPoint> net;  // u-major
  int nu = 0, nv = 0;
};

RawSurface from_surface(const NurbsSurface& s) {
  return {s.knots_u().knots(), s.knots_v().knots(), s.degree_u(), s.degree_v(),
          s.control_net(),     s.count_u(),         s.count_v()};
}

template <typename Fn>
void along_u(RawSurface& s, Fn&& fn) {
  RawSpline r{s.knots_u, s.p, std::move(s.net), s.nv};
  fn(r);
  s.knots_u = std::move(r.knots);
  s.nu = r.rows();
  s.net = std::move(r.points);
}

template <typename Fn>
void along_v(RawSurface& s, Fn&& fn) {
  RawSpline r{s.knots_v, s.q, transpose(s.net, s.nu, s.nv), s.nu};
  fn(r);
  s.knots_v = std::move(r.knots);
  s.nv = r.rows();
  s.net = transpose(r.points, s.nv, s.nu);
}

}  // namespace

Vec3 eval_bezier_segment(const BezierSegment& seg, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("segment parameter outside [0, 1]");
  HomogeneousPoint acc{0.0, 0.0, 0.0, 0.0};
  for (int i = 0; i <= seg.degree; ++i) {
    acc += seg.control_points[static_cast<std::size_t>(i)] * bernstein(i, seg.degree, t);
  }
  if (!(acc.w > 0.0)) throw DegeneracyError("segment weight sum is not positive");
  return acc.euclidean();
}

Vec3 eval_bezier_rectangle(const BezierRectangle& rect, double s, double t) {
  HomogeneousPoint acc{0.0, 0.0, 0.0, 0.0};
  for (int a = 0; a <= rect.degree_u; ++a) {
    const double ba = bernstein(a, rect.degree_u, s);
    for (int b = 0; b <= rect.degree_v; ++b) {
      acc += rect.at(a, b) * (ba * bernstein(b, rect.degree_v, t));
    }
  }
  if (!(acc.w > 0.0)) throw DegeneracyError("rectangle weight sum is not positive");
  return acc.euclidean();
}

NurbsCurve insert_knot(const NurbsCurve& curve, double u_hat) {
  RawSpline s = from_curve(curve);
  const double tol = s.tol();
  if (!(u_hat > curve.domain_start() + tol && u_hat < curve.domain_end() - tol)) {
    std::ostringstream os;
    os << "knot " << u_hat << " is not strictly inside the curve domain";
    throw DomainError(os.str());
  }
  const double u = snap(s, u_hat);
  if (multiplicity(s, u) + 1 > curve.degree()) {
    std::ostringstream os;
    os << "inserting " << u << " would raise its multiplicity above degree " << curve.degree();
    throw MultiplicityError(os.str());
  }
  insert_once(s, u);
  return to_curve(std::move(s));
}

NurbsCurve sub_curve(const NurbsCurve& curve, double a, double b) {
  if (!(a >= curve.domain_start() && b <= curve.domain_end() && a < b)) {
    throw DomainError("sub-curve interval outside the curve domain");
  }
  return to_curve(slice(from_curve(curve), a, b));
}

std::vector<BezierSegment> curve_to_bezier_segments(const NurbsCurve& curve, int entity) {
  RawSpline s = from_curve(curve);
  refine_to_bezier(s);
  const int p = s.degree;
  std::vector<BezierSegment> out;
  const int n = s.rows() - 1;
  for (int k = p; k <= n; ++k) {
    const double lo = s.knots[static_cast<std::size_t>(k)];
    const double hi = s.knots[static_cast<std::size_t>(k + 1)];
    if (!(hi > lo)) continue;
    BezierSegment seg;
    seg.degree = p;
    seg.control_points.assign(s.points.begin() + (k - p), s.points.begin() + k + 1);
    seg.source = {entity, lo, hi};
    out.push_back(std::move(seg));
  }
  return out;
}

BezierSegment elevate_segment_degree(const BezierSegment& seg, int target_degree) {
  if (target_degree < seg.degree) {
    throw ArgumentError("cannot elevate degree " + std::to_string(seg.degree) + " segment to " +
                        std::to_string(target_degree));
  }
  BezierSegment out = seg;
  while (out.degree < target_degree) {
    const int p = out.degree;
    const auto& P = out.control_points;
    std::vector<HomogeneousPoint> Q(static_cast<std::size_t>(p + 2));
    Q.front() = P.front();
    Q.back() = P.back();
    for (int i = 1; i <= p; ++i) {
      const double a = static_cast<double>(i) / (p + 1);
      Q[static_cast<std::size_t>(i)] =
          P[static_cast<std::size_t>(i - 1)] * a + P[static_cast<std::size_t>(i)] * (1.0 - a);
    }
    out.control_points = std::move(Q);
    out.degree = p + 1;
  }
  return out;
}

RectangleGrid surface_to_bezier_rectangles(const NurbsSurface& surface, int entity) {
  RawSurface s = from_surface(surface);
  along_u(s, refine_to_bezier);
  along_v(s, refine_to_bezier);

  auto spans = [](const std::vector<double>& U, int p, int n) {
    std::vector<int> out;
    for (int k = p; k <= n; ++k) {
      if (U[static_cast<std::size_t>(k + 1)] > U[static_cast<std::size_t>(k)]) out.push_back(k);
    }
    return out;
  };
  const auto su = spans(s.knots_u, s.p, s.nu - 1);
  const auto sv = spans(s.knots_v, s.q, s.nv - 1);

  RectangleGrid grid;
  grid.count_u = static_cast<int>(su.size());
  grid.count_v = static_cast<int>(sv.size());
  for (int ku : su) {
    for (int kv : sv) {
      BezierRectangle r;
      r.degree_u = s.p;
      r.degree_v = s.q;
      r.entity = entity;
      r.u0 = s.knots_u[static_cast<std::size_t>(ku)];
      r.u1 = s.knots_u[static_cast<std::size_t>(ku + 1)];
      r.v0 = s.knots_v[static_cast<std::size_t>(kv)];
      r.v1 = s.knots_v[static_cast<std::size_t>(kv + 1)];
      for (int a = 0; a <= s.p; ++a) {
        for (int b = 0; b <= s.q; ++b) {
          r.control_net.push_back(s.net[static_cast<std::size_t>((ku - s.p + a) * s.nv + (kv - s.q + b))]);
        }
      }
      grid.cells.push_back(std::move(r));
    }
  }
  return grid;
}

NurbsSurface restrict_surface(const NurbsSurface& surface, double u0, double u1, double v0, double v1) {
  if (!(u0 < u1 && v0 < v1)) throw DomainError("restriction box is empty");
  RawSurface s = from_surface(surface);
  along_u(s, [&](RawSpline& r) { r = slice(std::move(r), u0, u1); });
  along_v(s, [&](RawSpline& r) { r = slice(std::move(r), v0, v1); });
  return NurbsSurface(s.p, s.q, KnotVector(std::move(s.knots_u), s.p), KnotVector(std::move(s.knots_v), s.q),
                      std::move(s.net));
}

std::pair<BezierTriangle, BezierTriangle> rectangle_to_triangles(const BezierRectangle& rect) {
  const int p = rect.degree_u;
  const int q = rect.degree_v;
  const int d = p + q;

  auto convert = [&](auto&& net_at) {
    BezierTriangle tri;
    tri.degree = d;
    tri.control_points.resize(BezierTriangle::count(d), HomogeneousPoint{0.0, 0.0, 0.0, 0.0});
    for (int i = 0; i <= d; ++i) {
      for (int j = 0; j <= d - i; ++j) {
        // i! j! (d-i-j)! / d!
        const double inv_multinomial = 1.0 / (binomial(d, i) * binomial(d - i, j));
        HomogeneousPoint acc{0.0, 0.0, 0.0, 0.0};
        for (int a = 0; a <= p; ++a) {
          for (int b = 0; b <= q; ++b) {
            const double c = binomial(p, a) * binomial(q, b) * binomial(p - a, j - b) * binomial(q - b, i - a);
            if (c == 0.0) continue;
            acc += net_at(a, b) * (c * inv_multinomial);
          }
        }
        tri.control_points[BezierTriangle::index(d, i, j)] = acc;
      }
    }
    return tri;
  };

  BezierTriangle lower = convert([&](int a, int b) -> const HomogeneousPoint& { return rect.at(a, b); });
  BezierTriangle upper =
      convert([&](int a, int b) -> const HomogeneousPoint& { return rect.at(p - a, q - b); });
  lower.source = {rect.entity, rect.u0, rect.u1, rect.v0, rect.v1, TriangleHalf::kLower};
  upper.source = {rect.entity, rect.u0, rect.u1, rect.v0, rect.v1, TriangleHalf::kUpper};
  return {std::move(lower), std::move(upper)};
}

BezierTriangle elevate_triangle_degree(const BezierTriangle& tri, int target_degree) {
  if (target_degree < tri.degree) {
    throw ArgumentError("cannot elevate degree " + std::to_string(tri.degree) + " triangle to " +
                        std::to_string(target_degree));
  }
  BezierTriangle out = tri;
  while (out.degree < target_degree) {
    const int d = out.degree;
    const int e = d + 1;
    std::vector<HomogeneousPoint> next(BezierTriangle::count(e));
    for (int i = 0; i <= e; ++i) {
      for (int j = 0; j <= e - i; ++j) {
        const int k = e - i - j;
        HomogeneousPoint acc{0.0, 0.0, 0.0, 0.0};
        if (i > 0) acc += out.at(i - 1, j) * (static_cast<double>(i) / e);
        if (j > 0) acc += out.at(i, j - 1) * (static_cast<double>(j) / e);
        if (k > 0) acc += out.at(i, j) * (static_cast<double>(k) / e);
        next[BezierTriangle::index(e, i, j)] = acc;
      }
    }
    out.control_points = std::move(next);
    out.degree = e;
  }
  return out;
}

double triangle_area(const BezierTriangle& tri) {
  const int d = tri.degree;
  const Vec3 a = tri.at(0, 0).euclidean();
  const Vec3 b = tri.at(d, 0).euclidean();
  const Vec3 c = tri.at(0, d).euclidean();
  return 0.5 * norm(cross(b - a, c - a));
}

double segment_length(const BezierSegment& seg) {
  double len = 0.0;
  for (std::size_t i = 1; i < seg.control_points.size(); ++i) {
    len += norm(seg.control_points[i].euclidean() - seg.control_points[i - 1].euclidean());
  }
  return len;
}

std::vector<std::size_t> select_largest(std::span<const double> sizes, std::size_t cap) {
  std::vector<std::size_t> idx(sizes.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (idx.size() <= cap) return idx;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace b2s
