#ifndef B2S_GEOM_HPP_
#define B2S_GEOM_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace b2s {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Vec3&) const = default;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double norm(const Vec3& a);

// Control point lifted to 4-D: (w*x, w*y, w*z, w).
struct HomogeneousPoint {
  double wx = 0.0;
  double wy = 0.0;
  double wz = 0.0;
  double w = 1.0;

  // Throws ArgumentError unless weight > 0 and coordinates are finite.
  static HomogeneousPoint from_euclidean(const Vec3& p, double weight = 1.0);
  static HomogeneousPoint from_euclidean(double x, double y, double z, double weight = 1.0) {
    return from_euclidean(Vec3{x, y, z}, weight);
  }

  Vec3 euclidean() const { return {wx / w, wy / w, wz / w}; }

  HomogeneousPoint operator+(const HomogeneousPoint& o) const {
    return {wx + o.wx, wy + o.wy, wz + o.wz, w + o.w};
  }
  HomogeneousPoint operator*(double s) const { return {wx * s, wy * s, wz * s, w * s}; }
  HomogeneousPoint& operator+=(const HomogeneousPoint& o) {
    wx += o.wx;
    wy += o.wy;
    wz += o.wz;
    w += o.w;
    return *this;
  }
  bool operator==(const HomogeneousPoint&) const = default;
};

// Throws ArgumentError on a non-positive weight or non-finite coordinate.
void check_point(const HomogeneousPoint& p);

// Clamped, non-decreasing knot vector. Unclamped input is rejected.
class KnotVector {
 public:
  KnotVector() = default;
  KnotVector(std::vector<double> knots, int degree);

  int degree() const { return degree_; }
  const std::vector<double>& knots() const { return knots_; }
  std::size_t size() const { return knots_.size(); }
  double operator[](std::size_t i) const { return knots_[i]; }

  double domain_start() const { return knots_[degree_]; }
  double domain_end() const { return knots_[knots_.size() - 1 - degree_]; }
  // Number of basis functions, n + 1.
  int basis_count() const { return static_cast<int>(knots_.size()) - degree_ - 1; }

  // Absolute tolerance for knot equality, 1e-10 of the knot range.
  double tolerance() const;
  int multiplicity(double u) const;
  // Distinct interior knot values with their multiplicities, ascending.
  std::vector<std::pair<double, int>> interior_knots() const;
  // Index k with knots[k] <= u < knots[k+1], clamped to the last
  // non-empty span at the domain end.
  int find_span(double u) const;

  bool operator==(const KnotVector&) const = default;

 private:
  std::vector<double> knots_;
  int degree_ = 0;
};

// Rational B-spline curve. 2-D parameter-space curves use z = 0.
class NurbsCurve {
 public:
  NurbsCurve() = default;
  NurbsCurve(int degree, KnotVector knots, std::vector<HomogeneousPoint> control_points);
  NurbsCurve(int degree, std::vector<double> knots, std::vector<HomogeneousPoint> control_points)
      : NurbsCurve(degree, KnotVector(std::move(knots), degree), std::move(control_points)) {}

  int degree() const { return degree_; }
  const KnotVector& knots() const { return knots_; }
  const std::vector<HomogeneousPoint>& control_points() const { return points_; }
  double domain_start() const { return knots_.domain_start(); }
  double domain_end() const { return knots_.domain_end(); }

  // Same point set traversed backwards over the same domain.
  NurbsCurve reversed() const;

  bool operator==(const NurbsCurve&) const = default;

 private:
  int degree_ = 0;
  KnotVector knots_;
  std::vector<HomogeneousPoint> points_;
};

enum class LoopOrientation { kOuter, kInner };

struct TrimLoop {
  std::vector<NurbsCurve> pcurves;
  LoopOrientation orientation = LoopOrientation::kOuter;

  bool operator==(const TrimLoop&) const = default;
};

// Tensor-product rational surface, optionally trimmed. The control net is
// stored row-major with the u index outermost: at(i, j) for i in [0, nu),
// j in [0, nv).
class NurbsSurface {
 public:
  NurbsSurface() = default;
  NurbsSurface(int degree_u, int degree_v, KnotVector knots_u, KnotVector knots_v,
               std::vector<HomogeneousPoint> control_net, std::vector<TrimLoop> trim_loops = {});

  int degree_u() const { return degree_u_; }
  int degree_v() const { return degree_v_; }
  const KnotVector& knots_u() const { return knots_u_; }
  const KnotVector& knots_v() const { return knots_v_; }
  int count_u() const { return knots_u_.basis_count(); }
  int count_v() const { return knots_v_.basis_count(); }
  const std::vector<HomogeneousPoint>& control_net() const { return net_; }
  const HomogeneousPoint& at(int i, int j) const { return net_[static_cast<std::size_t>(i * count_v() + j)]; }
  const std::vector<TrimLoop>& trim_loops() const { return loops_; }
  bool trimmed() const { return !loops_.empty(); }

  bool operator==(const NurbsSurface&) const = default;

 private:
  int degree_u_ = 0;
  int degree_v_ = 0;
  KnotVector knots_u_;
  KnotVector knots_v_;
  std::vector<HomogeneousPoint> net_;
  std::vector<TrimLoop> loops_;
};

// Closure tolerance for trim loops in parameter space, relative to the
// surface parameter box diagonal.
inline constexpr double kLoopClosureTolerance = 1e-9;

// Reorders a loop so outer loops run counter-clockwise and inner loops
// clockwise in (u, v).
TrimLoop normalize_orientation(const TrimLoop& loop);
// Signed area enclosed by a densely sampled loop; positive when CCW.
double loop_signed_area(const TrimLoop& loop);

enum class TriangleHalf { kLower, kUpper };

// Where a Bezier triangle came from: the (u, v) cell of the parent surface
// and which side of the u+v=1 diagonal of that cell it covers.
struct TriangleSource {
  int entity = 0;
  double u0 = 0.0, u1 = 1.0, v0 = 0.0, v1 = 1.0;
  TriangleHalf half = TriangleHalf::kLower;

  bool operator==(const TriangleSource&) const = default;
};

// Triangular Bezier patch of total degree d. Control points are ordered
// (i, j)-lexicographically: i = 0..d outer, j = 0..d-i inner.
struct BezierTriangle {
  int degree = 0;
  std::vector<HomogeneousPoint> control_points;
  TriangleSource source;

  static std::size_t count(int degree) {
    return static_cast<std::size_t>((degree + 1) * (degree + 2) / 2);
  }
  static std::size_t index(int degree, int i, int j);
  const HomogeneousPoint& at(int i, int j) const { return control_points[index(degree, i, j)]; }

  bool operator==(const BezierTriangle&) const = default;
};

double binomial(int n, int k);

double bernstein(int i, int n, double u);
// Cox-de Boor recursion with 0/0 := 0. At the right domain end the last
// non-empty span is treated as closed.
double bspline_basis(int i, int p, double u, const KnotVector& knots);
// d!/(i! j! (d-i-j)!) u^i v^j (1-u-v)^(d-i-j).
double bernstein_triangle(int i, int j, int d, double u, double v);

HomogeneousPoint eval_curve_homogeneous(const NurbsCurve& curve, double u);
Vec3 eval_curve(const NurbsCurve& curve, double u);
HomogeneousPoint eval_surface_homogeneous(const NurbsSurface& surface, double u, double v);
Vec3 eval_surface(const NurbsSurface& surface, double u, double v);
Vec3 eval_bezier_triangle(const BezierTriangle& tri, double u, double v);

// Maps a point of the unit triangle of `tri` to parameters of its source
// surface.
std::pair<double, double> triangle_to_surface_params(const TriangleSource& src, double u, double v);

}  // namespace b2s

#endif  // B2S_GEOM_HPP_
