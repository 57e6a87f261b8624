#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss.hpp>

#include "b2s/decompose.hpp"
#include "b2s/errors.hpp"

namespace b2s {

namespace {

using Gauss = boost::math::quadrature::gauss<double, 20>;

// [a, b] split at the curve's interior knots so every piece is smooth.
std::vector<std::pair<double, double>> smooth_pieces(const NurbsCurve& curve, double a, double b) {
  std::vector<std::pair<double, double>> out;
  double lo = a;
  for (const auto& [k, mult] : curve.knots().interior_knots()) {
    if (k > lo && k < b) {
      out.emplace_back(lo, k);
      lo = k;
    }
  }
  out.emplace_back(lo, b);
  return out;
}

double speed(const NurbsCurve& curve, double t, double step) {
  const Vec3 d = (eval_curve(curve, t + step) - eval_curve(curve, t - step)) * (0.5 / step);
  return norm(d);
}

}  // namespace

double arc_length(const NurbsCurve& curve, double a, double b) {
  double total = 0.0;
  for (const auto& [lo, hi] : smooth_pieces(curve, a, b)) {
    const double step = 1e-6 * (hi - lo);
    total += Gauss::integrate([&](double t) { return speed(curve, t, step); }, lo, hi);
  }
  return total;
}

double chord_to_arc(const NurbsCurve& curve, double a, double b) {
  const double arc = arc_length(curve, a, b);
  const double chord = norm(eval_curve(curve, b) - eval_curve(curve, a));
  if (!(arc > 0.0)) return 1.0;
  return std::clamp(chord / arc, std::numeric_limits<double>::min(), 1.0);
}

double curvature(const NurbsCurve& curve, double t) {
  const double lo = curve.domain_start();
  const double hi = curve.domain_end();
  const double step = 1e-4 * (hi - lo);
  t = std::clamp(t, lo + step, hi - step);
  const Vec3 prev = eval_curve(curve, t - step);
  const Vec3 mid = eval_curve(curve, t);
  const Vec3 next = eval_curve(curve, t + step);
  const Vec3 d1 = (next - prev) * (0.5 / step);
  const Vec3 d2 = (next - mid * 2.0 + prev) * (1.0 / (step * step));
  const double s = norm(d1);
  if (!(s > 0.0)) return 0.0;
  return norm(cross(d1, d2)) / (s * s * s);
}

BoundaryErrorReport boundary_rmse(const NurbsCurve& pcurve, std::span<const double> breakpoints) {
  if (breakpoints.size() < 2) throw ArgumentError("boundary_rmse needs at least 2 breakpoints");
  const double a = pcurve.domain_start();
  const double b = pcurve.domain_end();
  const double tol = 1e-10 * (b - a);
  for (std::size_t i = 1; i < breakpoints.size(); ++i) {
    if (!(breakpoints[i] > breakpoints[i - 1])) throw ArgumentError("breakpoints must be strictly increasing");
  }
  if (std::abs(breakpoints.front() - a) > tol || std::abs(breakpoints.back() - b) > tol) {
    throw ArgumentError("breakpoints must span the curve domain");
  }

  BoundaryErrorReport rep;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    const double t0 = std::clamp(breakpoints[i], a, b);
    const double t1 = std::clamp(breakpoints[i + 1], a, b);
    const double h = t1 - t0;
    const Vec3 c0 = eval_curve(pcurve, t0);
    const Vec3 c1 = eval_curve(pcurve, t1);
    auto deviation2 = [&](double t) {
      const Vec3 lin = c0 + (c1 - c0) * ((t - t0) / h);
      const Vec3 e = eval_curve(pcurve, t) - lin;
      return dot(e, e);
    };
    for (const auto& [lo, hi] : smooth_pieces(pcurve, t0, t1)) {
      rep.squared_error += Gauss::integrate(deviation2, lo, hi);
    }
    const double arc = arc_length(pcurve, t0, t1);
    rep.arc_length += arc;
    rep.max_step = std::max(rep.max_step, h);
    const double ratio = arc > 0.0 ? norm(c1 - c0) / arc : 1.0;
    rep.chord_to_arc.push_back(std::clamp(ratio, std::numeric_limits<double>::min(), 1.0));
    rep.curvature.push_back(curvature(pcurve, 0.5 * (t0 + t1)));
  }
  rep.rmse = rep.arc_length > 0.0 ? std::sqrt(rep.squared_error / rep.arc_length) : 0.0;
  return rep;
}

ConvergenceStudy boundary_convergence(const NurbsCurve& curve, int levels, int base_segments) {
  if (levels < 2) throw ArgumentError("a convergence study needs at least 2 levels");
  if (base_segments < 1) throw ArgumentError("base segment count must be positive");
  const double a = curve.domain_start();
  const double b = curve.domain_end();
  ConvergenceStudy study;
  for (int k = 0; k < levels; ++k) {
    const int n = base_segments << k;
    std::vector<double> breaks(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) breaks[static_cast<std::size_t>(i)] = i == n ? b : a + (b - a) * i / n;
    const BoundaryErrorReport rep = boundary_rmse(curve, breaks);
    study.h.push_back(rep.max_step);
    study.rmse.push_back(rep.rmse);
  }
  double mx = 0.0, my = 0.0;
  for (int k = 0; k < levels; ++k) {
    mx += std::log(study.h[static_cast<std::size_t>(k)]);
    my += std::log(study.rmse[static_cast<std::size_t>(k)]);
  }
  mx /= levels;
  my /= levels;
  double sxy = 0.0, sxx = 0.0;
  for (int k = 0; k < levels; ++k) {
    const double dx = std::log(study.h[static_cast<std::size_t>(k)]) - mx;
    sxy += dx * (std::log(study.rmse[static_cast<std::size_t>(k)]) - my);
    sxx += dx * dx;
  }
  study.slope = sxy / sxx;
  return study;
}

}  // namespace b2s
