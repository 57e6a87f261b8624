#ifndef B2S_TESTS_SUPPORT_HPP_
#define B2S_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "b2s/geom.hpp"

namespace b2s::testing {

inline HomogeneousPoint random_point(std::mt19937_64& rng, double wlo = 0.3, double whi = 3.0) {
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  std::uniform_real_distribution<double> w(wlo, whi);
  return HomogeneousPoint::from_euclidean(c(rng), c(rng), c(rng), w(rng));
}

// Clamped knots on [a, b] for `count` control points of degree p, with
// random interior values and occasional repeats up to multiplicity p.
inline std::vector<double> random_knots(std::mt19937_64& rng, int p, int count, double a = 0.0, double b = 1.0) {
  std::uniform_real_distribution<double> u(a, b);
  const int interior = count - p - 1;
  std::vector<double> in;
  while (static_cast<int>(in.size()) < interior) {
    const double k = u(rng);
    const int rep = std::min<int>(1 + static_cast<int>(rng() % static_cast<unsigned>(std::max(p, 1))),
                                  interior - static_cast<int>(in.size()));
    for (int r = 0; r < rep; ++r) in.push_back(k);
  }
  std::sort(in.begin(), in.end());
  std::vector<double> knots(static_cast<std::size_t>(p + 1), a);
  knots.insert(knots.end(), in.begin(), in.end());
  knots.insert(knots.end(), static_cast<std::size_t>(p + 1), b);
  return knots;
}

inline NurbsCurve random_curve(std::mt19937_64& rng, int p) {
  const int count = p + 1 + static_cast<int>(rng() % 6);
  std::uniform_real_distribution<double> lo(-1.0, 1.0);
  const double a = lo(rng);
  const double b = a + 0.5 + std::abs(lo(rng));
  std::vector<HomogeneousPoint> pts;
  for (int i = 0; i < count; ++i) pts.push_back(random_point(rng));
  return NurbsCurve(p, random_knots(rng, p, count, a, b), std::move(pts));
}

inline NurbsSurface random_surface(std::mt19937_64& rng, int p, int q) {
  const int nu = p + 1 + static_cast<int>(rng() % 4);
  const int nv = q + 1 + static_cast<int>(rng() % 4);
  std::vector<HomogeneousPoint> net;
  for (int i = 0; i < nu * nv; ++i) net.push_back(random_point(rng));
  return NurbsSurface(p, q, KnotVector(random_knots(rng, p, nu), p), KnotVector(random_knots(rng, q, nv), q),
                      std::move(net));
}

inline double uniform(std::mt19937_64& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

// Point of the closed unit triangle.
inline std::pair<double, double> triangle_point(std::mt19937_64& rng) {
  double u = uniform(rng, 0.0, 1.0);
  double v = uniform(rng, 0.0, 1.0);
  if (u + v > 1.0) {
    u = 1.0 - u;
    v = 1.0 - v;
  }
  return {u, v};
}

}  // namespace b2s::testing

#endif  // B2S_TESTS_SUPPORT_HPP_
