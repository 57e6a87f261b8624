#include "b2s/geom.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "b2s/errors.hpp"

namespace b2s {

namespace {

constexpr double kKnotRelTolerance = 1e-10;
// Slack when deciding that a parameter sits inside a closed domain.
constexpr double kDomainSlack = 1e-13;

bool finite(const HomogeneousPoint& p) {
  return std::isfinite(p.wx) && std::isfinite(p.wy) && std::isfinite(p.wz) && std::isfinite(p.w);
}

// Snaps u onto [a, b] when it is within rounding distance of the domain,
// otherwise throws.
double clamp_to_domain(double u, double a, double b, const char* what) {
  const double slack = kDomainSlack * std::max(1.0, b - a);
  if (!(u >= a - slack && u <= b + slack)) {
    std::ostringstream os;
    os << what << ": parameter " << u << " outside domain [" << a << ", " << b << "]";
    throw DomainError(os.str());
  }
  return std::clamp(u, a, b);
}

// Non-zero basis functions N_{span-p..span, p}(u) (The NURBS Book A2.2).
void basis_functions(const KnotVector& kv, int span, double u, int p, double* out) {
  std::array<double, 32> left{};
  std::array<double, 32> right{};
  out[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - kv[span + 1 - j];
    right[j] = kv[span + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

Vec3 divide(const HomogeneousPoint& h) {
  if (!(h.w > 0.0)) {
    throw DegeneracyError("accumulated rational weight is not positive");
  }
  return h.euclidean();
}

}  // namespace

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

HomogeneousPoint HomogeneousPoint::from_euclidean(const Vec3& p, double weight) {
  HomogeneousPoint h{p.x * weight, p.y * weight, p.z * weight, weight};
  check_point(h);
  return h;
}

void check_point(const HomogeneousPoint& p) {
  if (!finite(p)) throw ArgumentError("control point has a non-finite coordinate");
  if (!(p.w > 0.0)) throw ArgumentError("control point weight must be positive");
}

KnotVector::KnotVector(std::vector<double> knots, int degree)
    : knots_(std::move(knots)), degree_(degree) {
  if (degree_ < 0 || degree_ > 30) throw ArgumentError("knot vector degree out of range");
  const auto need = static_cast<std::size_t>(2 * (degree_ + 1));
  if (knots_.size() < need) {
    throw ArgumentError("knot vector too short for degree " + std::to_string(degree_));
  }
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!std::isfinite(knots_[i])) throw ArgumentError("knot vector has a non-finite value");
    if (i > 0 && knots_[i] < knots_[i - 1]) throw ArgumentError("knot vector is decreasing");
  }
  if (!(knots_.back() > knots_.front())) throw ArgumentError("knot vector has an empty range");
  const double tol = tolerance();
  const auto p = static_cast<std::size_t>(degree_);
  const std::size_t m = knots_.size() - 1;
  for (std::size_t i = 0; i <= p; ++i) {
    if (knots_[i] - knots_.front() > tol || knots_.back() - knots_[m - i] > tol) {
      throw ArgumentError("knot vector is not clamped");
    }
  }
  if (knots_[p + 1] - knots_.front() <= tol || knots_.back() - knots_[m - p - 1] <= tol) {
    throw ArgumentError("end knot multiplicity exceeds degree + 1");
  }
}

double KnotVector::tolerance() const {
  return kKnotRelTolerance * (knots_.back() - knots_.front());
}

int KnotVector::multiplicity(double u) const {
  const double tol = tolerance();
  return static_cast<int>(std::count_if(knots_.begin(), knots_.end(),
                                         [&](double k) { return std::abs(k - u) <= tol; }));
}

std::vector<std::pair<double, int>> KnotVector::interior_knots() const {
  std::vector<std::pair<double, int>> out;
  const double tol = tolerance();
  const double a = domain_start();
  const double b = domain_end();
  for (double k : knots_) {
    if (k - a <= tol || b - k <= tol) continue;
    if (!out.empty() && k - out.back().first <= tol) {
      ++out.back().second;
    } else {
      out.emplace_back(k, 1);
    }
  }
  return out;
}

int KnotVector::find_span(double u) const {
  const int n = basis_count() - 1;
  if (u >= knots_[static_cast<std::size_t>(n + 1)]) return n;
  if (u <= knots_[static_cast<std::size_t>(degree_)]) return degree_;
  int low = degree_;
  int high = n + 1;
  int mid = (low + high) / 2;
  while (u < knots_[static_cast<std::size_t>(mid)] || u >= knots_[static_cast<std::size_t>(mid + 1)]) {
    if (u < knots_[static_cast<std::size_t>(mid)]) {
      high = mid;
    } else {
      low = mid;
    }
    mid = (low + high) / 2;
  }
  return mid;
}

NurbsCurve::NurbsCurve(int degree, KnotVector knots, std::vector<HomogeneousPoint> control_points)
    : degree_(degree), knots_(std::move(knots)), points_(std::move(control_points)) {
  if (knots_.degree() != degree_) throw ArgumentError("curve degree disagrees with knot vector");
  if (static_cast<int>(points_.size()) != knots_.basis_count()) {
    std::ostringstream os;
    os << "curve has " << points_.size() << " control points but knot vector implies "
       << knots_.basis_count();
    throw ArgumentError(os.str());
  }
  for (const auto& p : points_) check_point(p);
}

NurbsCurve NurbsCurve::reversed() const {
  const double a = knots_.knots().front();
  const double b = knots_.knots().back();
  std::vector<double> k(knots_.knots().rbegin(), knots_.knots().rend());
  for (double& x : k) x = a + b - x;
  // Keep the clamped ends bitwise equal to the originals.
  for (int i = 0; i <= degree_; ++i) {
    k[static_cast<std::size_t>(i)] = a;
    k[k.size() - 1 - static_cast<std::size_t>(i)] = b;
  }
  std::vector<HomogeneousPoint> pts(points_.rbegin(), points_.rend());
  return NurbsCurve(degree_, KnotVector(std::move(k), degree_), std::move(pts));
}

NurbsSurface::NurbsSurface(int degree_u, int degree_v, KnotVector knots_u, KnotVector knots_v,
                           std::vector<HomogeneousPoint> control_net, std::vector<TrimLoop> trim_loops)
    : degree_u_(degree_u),
      degree_v_(degree_v),
      knots_u_(std::move(knots_u)),
      knots_v_(std::move(knots_v)),
      net_(std::move(control_net)),
      loops_(std::move(trim_loops)) {
  if (knots_u_.degree() != degree_u_ || knots_v_.degree() != degree_v_) {
    throw ArgumentError("surface degrees disagree with knot vectors");
  }
  const auto expect = static_cast<std::size_t>(count_u() * count_v());
  if (net_.size() != expect) {
    std::ostringstream os;
    os << "surface control net has " << net_.size() << " points, knot vectors imply " << expect;
    throw ArgumentError(os.str());
  }
  for (const auto& p : net_) check_point(p);

  const double du = knots_u_.domain_end() - knots_u_.domain_start();
  const double dv = knots_v_.domain_end() - knots_v_.domain_start();
  const double tol = kLoopClosureTolerance * std::max(1.0, std::hypot(du, dv));
  for (std::size_t li = 0; li < loops_.size(); ++li) {
    const auto& pcs = loops_[li].pcurves;
    if (pcs.empty()) throw TopologyError("trim loop " + std::to_string(li) + " is empty");
    for (std::size_t c = 0; c < pcs.size(); ++c) {
      const auto& cur = pcs[c];
      const auto& nxt = pcs[(c + 1) % pcs.size()];
      const Vec3 end = eval_curve(cur, cur.domain_end());
      const Vec3 start = eval_curve(nxt, nxt.domain_start());
      if (std::hypot(end.x - start.x, end.y - start.y) > tol) {
        std::ostringstream os;
        os << "trim loop " << li << " is open after pcurve " << c;
        throw TopologyError(os.str());
      }
    }
  }
}

double loop_signed_area(const TrimLoop& loop) {
  constexpr int kSamples = 256;
  double area = 0.0;
  for (const auto& pc : loop.pcurves) {
    const double a = pc.domain_start();
    const double b = pc.domain_end();
    Vec3 prev = eval_curve(pc, a);
    for (int s = 1; s <= kSamples; ++s) {
      const Vec3 cur = eval_curve(pc, a + (b - a) * s / kSamples);
      area += prev.x * cur.y - cur.x * prev.y;
      prev = cur;
    }
  }
  return 0.5 * area;
}

TrimLoop normalize_orientation(const TrimLoop& loop) {
  const double area = loop_signed_area(loop);
  const bool want_ccw = loop.orientation == LoopOrientation::kOuter;
  if ((area > 0.0) == want_ccw) return loop;
  TrimLoop out;
  out.orientation = loop.orientation;
  for (auto it = loop.pcurves.rbegin(); it != loop.pcurves.rend(); ++it) {
    out.pcurves.push_back(it->reversed());
  }
  return out;
}

std::size_t BezierTriangle::index(int degree, int i, int j) {
  // Rows i' < i hold (d + 1 - i') entries each.
  return static_cast<std::size_t>(i * (degree + 1) - i * (i - 1) / 2 + j);
}

double binomial(int n, int k) {
  if (k < 0 || k > n || n < 0) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

double bernstein(int i, int n, double u) {
  if (n < 0 || i < 0 || i > n) {
    throw ArgumentError("bernstein index " + std::to_string(i) + " out of range for degree " +
                        std::to_string(n));
  }
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("bernstein parameter outside [0, 1]");
  return binomial(n, i) * std::pow(u, i) * std::pow(1.0 - u, n - i);
}

double bspline_basis(int i, int p, double u, const KnotVector& knots) {
  const int m = static_cast<int>(knots.size()) - 1;
  if (i < 0 || p < 0 || i + p + 1 > m) return 0.0;
  if (p == 0) {
    const double lo = knots[static_cast<std::size_t>(i)];
    const double hi = knots[static_cast<std::size_t>(i + 1)];
    if (lo <= u && u < hi) return 1.0;
    if (u >= knots.domain_end() && i == knots.find_span(u)) return 1.0;
    return 0.0;
  }
  const double ui = knots[static_cast<std::size_t>(i)];
  const double uip = knots[static_cast<std::size_t>(i + p)];
  const double ui1 = knots[static_cast<std::size_t>(i + 1)];
  const double uip1 = knots[static_cast<std::size_t>(i + p + 1)];
  double left = 0.0;
  double right = 0.0;
  if (uip - ui != 0.0) left = (u - ui) / (uip - ui) * bspline_basis(i, p - 1, u, knots);
  if (uip1 - ui1 != 0.0) right = (uip1 - u) / (uip1 - ui1) * bspline_basis(i + 1, p - 1, u, knots);
  return left + right;
}

double bernstein_triangle(int i, int j, int d, double u, double v) {
  if (i < 0 || j < 0 || i + j > d) {
    throw ArgumentError("triangle bernstein index out of range");
  }
  const int k = d - i - j;
  const double coeff = binomial(d, i) * binomial(d - i, j);
  const double t = 1.0 - u - v;
  return coeff * std::pow(u, i) * std::pow(v, j) * std::pow(t, k);
}

HomogeneousPoint eval_curve_homogeneous(const NurbsCurve& curve, double u) {
  const KnotVector& kv = curve.knots();
  u = clamp_to_domain(u, curve.domain_start(), curve.domain_end(), "eval_curve");
  const auto& pts = curve.control_points();
  if (u == curve.domain_start()) return pts.front();
  if (u == curve.domain_end()) return pts.back();
  const int p = curve.degree();
  const int span = kv.find_span(u);
  std::array<double, 32> n{};
  basis_functions(kv, span, u, p, n.data());
  HomogeneousPoint acc{0.0, 0.0, 0.0, 0.0};
  for (int r = 0; r <= p; ++r) acc += pts[static_cast<std::size_t>(span - p + r)] * n[r];
  return acc;
}

Vec3 eval_curve(const NurbsCurve& curve, double u) {
  return divide(eval_curve_homogeneous(curve, u));
}

HomogeneousPoint eval_surface_homogeneous(const NurbsSurface& s, double u, double v) {
  const KnotVector& ku = s.knots_u();
  const KnotVector& kv = s.knots_v();
  u = clamp_to_domain(u, ku.domain_start(), ku.domain_end(), "eval_surface(u)");
  v = clamp_to_domain(v, kv.domain_start(), kv.domain_end(), "eval_surface(v)");
  const int p = s.degree_u();
  const int q = s.degree_v();
  const int su = ku.find_span(u);
  const int sv = kv.find_span(v);
  std::array<double, 32> nu{};
  std::array<double, 32> nv{};
  basis_functions(ku, su, u, p, nu.data());
  basis_functions(kv, sv, v, q, nv.data());
  HomogeneousPoint acc{0.0, 0.0, 0.0, 0.0};
  for (int a = 0; a <= p; ++a) {
    HomogeneousPoint row{0.0, 0.0, 0.0, 0.0};
    for (int b = 0; b <= q; ++b) row += s.at(su - p + a, sv - q + b) * nv[b];
    acc += row * nu[a];
  }
  return acc;
}

Vec3 eval_surface(const NurbsSurface& surface, double u, double v) {
  return divide(eval_surface_homogeneous(surface, u, v));
}

Vec3 eval_bezier_triangle(const BezierTriangle& tri, double u, double v) {
  constexpr double kSlack = 1e-12;
  if (!(u >= -kSlack && v >= -kSlack && u + v <= 1.0 + kSlack)) {
    std::ostringstream os;
    os << "triangle parameters (" << u << ", " << v << ") outside the unit triangle";
    throw DomainError(os.str());
  }
  u = std::max(u, 0.0);
  v = std::max(v, 0.0);
  if (u + v > 1.0) {
    const double s = u + v;
    u /= s;
    v /= s;
  }
  const int d = tri.degree;
  HomogeneousPoint acc{0.0, 0.0, 0.0, 0.0};
  for (int i = 0; i <= d; ++i) {
    for (int j = 0; j <= d - i; ++j) {
      acc += tri.at(i, j) * bernstein_triangle(i, j, d, u, v);
    }
  }
  return divide(acc);
}

std::pair<double, double> triangle_to_surface_params(const TriangleSource& src, double u, double v) {
  double s = u;
  double t = v;
  if (src.half == TriangleHalf::kUpper) {
    s = 1.0 - u;
    t = 1.0 - v;
  }
  return {src.u0 + s * (src.u1 - src.u0), src.v0 + t * (src.v1 - src.v0)};
}

}  // namespace b2s
