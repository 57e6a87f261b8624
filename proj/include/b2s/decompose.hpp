#ifndef B2S_DECOMPOSE_HPP_
#define B2S_DECOMPOSE_HPP_

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "b2s/geom.hpp"

namespace b2s {

inline constexpr double kDefaultTau = 0.995;
inline constexpr int kDefaultMaxDepth = 8;
inline constexpr int kStandardCurveDegree = 3;
inline constexpr int kStandardTriangleDegree = 6;

struct SegmentSource {
  int entity = 0;
  double t0 = 0.0;
  double t1 = 1.0;

  bool operator==(const SegmentSource&) const = default;
};

// Bezier curve over [0, 1] with degree + 1 homogeneous control points.
struct BezierSegment {
  int degree = 0;
  std::vector<HomogeneousPoint> control_points;
  SegmentSource source;

  bool operator==(const BezierSegment&) const = default;
};

// Tensor-product Bezier patch over [0, 1]^2. Net is (p+1) x (q+1), u-major.
struct BezierRectangle {
  int degree_u = 0;
  int degree_v = 0;
  std::vector<HomogeneousPoint> control_net;
  int entity = 0;
  double u0 = 0.0, u1 = 1.0, v0 = 0.0, v1 = 1.0;

  const HomogeneousPoint& at(int a, int b) const {
    return control_net[static_cast<std::size_t>(a * (degree_v + 1) + b)];
  }
};

struct RectangleGrid {
  int count_u = 0;
  int count_v = 0;
  std::vector<BezierRectangle> cells;  // u-major

  const BezierRectangle& at(int a, int b) const {
    return cells[static_cast<std::size_t>(a * count_v + b)];
  }
};

enum class CellClass { kInterior, kExterior, kBoundary };

// Quadtree leaf. Bounds are the dyadic cell (ix, iy) at `depth` of the
// surface's parameter box, so exact tiling can be checked in integers.
struct QuadCell {
  int depth = 0;
  std::uint32_t ix = 0;
  std::uint32_t iy = 0;
  CellClass cls = CellClass::kInterior;
  // Boundary cells only: every trim piece met the chord-to-arc threshold.
  bool converged = true;
  double u0 = 0.0, u1 = 1.0, v0 = 0.0, v1 = 1.0;
};

struct BoundaryErrorReport {
  double max_step = 0.0;       // h, parametric
  double arc_length = 0.0;     // L
  double squared_error = 0.0;  // integral of |C - L_i|^2 dt
  double rmse = 0.0;           // sqrt(squared_error / L)
  std::vector<double> chord_to_arc;
  std::vector<double> curvature;
};

struct QuadtreeResult {
  std::vector<BezierTriangle> triangles;
  std::vector<QuadCell> cells;
  BoundaryErrorReport report;
  // Indices into `cells` of boundary leaves stopped by the depth cap.
  std::vector<std::size_t> unconverged;
};

Vec3 eval_bezier_segment(const BezierSegment& seg, double t);
Vec3 eval_bezier_rectangle(const BezierRectangle& rect, double s, double t);

// Boehm single knot insertion; the returned curve traces the same points.
NurbsCurve insert_knot(const NurbsCurve& curve, double u_hat);
// Clamped sub-curve over [a, b] within the domain, reparameterization-free.
NurbsCurve sub_curve(const NurbsCurve& curve, double a, double b);

std::vector<BezierSegment> curve_to_bezier_segments(const NurbsCurve& curve, int entity = 0);
BezierSegment elevate_segment_degree(const BezierSegment& seg, int target_degree);

RectangleGrid surface_to_bezier_rectangles(const NurbsSurface& surface, int entity = 0);
// Untrimmed copy of `surface` restricted to [u0, u1] x [v0, v1].
NurbsSurface restrict_surface(const NurbsSurface& surface, double u0, double u1, double v0, double v1);

// Lower triangle covers u+v <= 1 of the rectangle; the upper one is the
// lower triangle of the rectangle reparameterized by (u, v) -> (1-u, 1-v).
std::pair<BezierTriangle, BezierTriangle> rectangle_to_triangles(const BezierRectangle& rect);
BezierTriangle elevate_triangle_degree(const BezierTriangle& tri, int target_degree);

QuadtreeResult quadtree_decompose(const NurbsSurface& surface, double tau = kDefaultTau,
                                  int max_depth = kDefaultMaxDepth, int entity = 0);

// Arc length over [a, b] by Gauss-Legendre quadrature of a central
// finite-difference speed.
double arc_length(const NurbsCurve& curve, double a, double b);
double chord_to_arc(const NurbsCurve& curve, double a, double b);
// |C' x C''| / |C'|^3 by finite differences.
double curvature(const NurbsCurve& curve, double t);

// RMSE of the piecewise-linear interpolant through the breakpoints,
// normalized by arc length.
BoundaryErrorReport boundary_rmse(const NurbsCurve& pcurve, std::span<const double> breakpoints);

struct ConvergenceStudy {
  std::vector<double> h;
  std::vector<double> rmse;
  double slope = 0.0;  // least-squares fit of log rmse against log h
};

// boundary_rmse over uniform breakpoints with base_segments * 2^k pieces,
// k = 0 .. levels - 1.
ConvergenceStudy boundary_convergence(const NurbsCurve& curve, int levels, int base_segments = 8);

// Deterministic cap selection: largest first (ties by index), returned in
// ascending index order.
std::vector<std::size_t> select_largest(std::span<const double> sizes, std::size_t cap);
double triangle_area(const BezierTriangle& tri);
double segment_length(const BezierSegment& seg);

}  // namespace b2s

#endif  // B2S_DECOMPOSE_HPP_
