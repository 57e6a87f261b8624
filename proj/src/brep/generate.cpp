#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include "b2s/brep.hpp"
#include "b2s/errors.hpp"

namespace b2s {

namespace {

const double kHalfSqrt2 = std::sqrt(2.0) / 2.0;

NurbsCurve line(const Vec3& a, const Vec3& b) {
  return NurbsCurve(1, {0.0, 0.0, 1.0, 1.0}, {HomogeneousPoint::from_euclidean(a), HomogeneousPoint::from_euclidean(b)});
}

// Bilinear patch with S(0,0)=p00, S(1,0)=p10, S(0,1)=p01, S(1,1)=p11.
NurbsSurface bilinear(const Vec3& p00, const Vec3& p10, const Vec3& p01, const Vec3& p11,
                      std::vector<TrimLoop> loops = {}) {
  return NurbsSurface(1, 1, KnotVector({0.0, 0.0, 1.0, 1.0}, 1), KnotVector({0.0, 0.0, 1.0, 1.0}, 1),
                      {HomogeneousPoint::from_euclidean(p00), HomogeneousPoint::from_euclidean(p01),
                       HomogeneousPoint::from_euclidean(p10), HomogeneousPoint::from_euclidean(p11)},
                      std::move(loops));
}

const std::vector<double> kCircleKnots{0.0, 0.0, 0.0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1.0, 1.0, 1.0};

// Circle (x, y) offsets and weights of the 9-point rational quadratic.
constexpr std::array<std::array<double, 2>, 9> kCircleDirs{
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}}};

double circle_weight(std::size_t i) { return i % 2 == 1 ? kHalfSqrt2 : 1.0; }

// Cylinder wall: u runs around the circle, v along the axis from z0 to z1.
NurbsSurface cylinder_wall(double cx, double cy, double r, double z0, double z1) {
  std::vector<HomogeneousPoint> net;
  for (std::size_t i = 0; i < 9; ++i) {
    const double x = cx + r * kCircleDirs[i][0];
    const double y = cy + r * kCircleDirs[i][1];
    net.push_back(HomogeneousPoint::from_euclidean({x, y, z0}, circle_weight(i)));
    net.push_back(HomogeneousPoint::from_euclidean({x, y, z1}, circle_weight(i)));
  }
  return NurbsSurface(2, 1, KnotVector(kCircleKnots, 2), KnotVector({0.0, 0.0, 1.0, 1.0}, 1), std::move(net));
}

TrimLoop circle_loop(double cu, double cv, double ru, double rv, LoopOrientation orientation) {
  std::vector<HomogeneousPoint> pts;
  for (std::size_t i = 0; i < 9; ++i) {
    pts.push_back(HomogeneousPoint::from_euclidean(
        {cu + ru * kCircleDirs[i][0], cv + rv * kCircleDirs[i][1], 0.0}, circle_weight(i)));
  }
  TrimLoop loop{{NurbsCurve(2, kCircleKnots, std::move(pts))}, orientation};
  return normalize_orientation(loop);
}

TrimLoop unit_square_loop() {
  const Vec3 c[4] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  TrimLoop loop;
  loop.orientation = LoopOrientation::kOuter;
  for (int i = 0; i < 4; ++i) loop.pcurves.push_back(line(c[i], c[(i + 1) % 4]));
  return loop;
}

struct BoxParts {
  std::vector<Face> faces;
  std::vector<Edge> edges;
};

// Axis-aligned box [0,a]x[0,b]x[0,c]. Face 2*axis + side lies on the plane
// coordinate[axis] = side * extent. Loops, when given, go on the z faces.
BoxParts box_parts(double a, double b, double c, const std::vector<TrimLoop>& z_loops) {
  const double ext[3] = {a, b, c};
  auto vertex = [&](int bits) {
    return Vec3{(bits & 1) ? a : 0.0, (bits & 2) ? b : 0.0, (bits & 4) ? c : 0.0};
  };
  BoxParts parts;
  for (int axis = 0; axis < 3; ++axis) {
    const int u_axis = (axis + 1) % 3;
    const int v_axis = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      auto corner = [&](int du, int dv) {
        double p[3] = {0, 0, 0};
        p[axis] = side * ext[axis];
        p[u_axis] = du * ext[u_axis];
        p[v_axis] = dv * ext[v_axis];
        return Vec3{p[0], p[1], p[2]};
      };
      std::vector<TrimLoop> loops;
      if (axis == 2 && !z_loops.empty()) loops = z_loops;
      const int id = static_cast<int>(parts.faces.size());
      parts.faces.push_back({id, bilinear(corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1), std::move(loops))});
    }
  }
  for (int from = 0; from < 8; ++from) {
    for (int axis = 0; axis < 3; ++axis) {
      if (from & (1 << axis)) continue;
      const int to = from | (1 << axis);
      std::vector<int> bounds;
      for (int fixed = 0; fixed < 3; ++fixed) {
        if (fixed == axis) continue;
        bounds.push_back(2 * fixed + ((from >> fixed) & 1));
      }
      const int id = static_cast<int>(parts.edges.size());
      parts.edges.push_back({id, line(vertex(from), vertex(to)), bounds});
    }
  }
  return parts;
}

void require_positive(std::initializer_list<double> dims, const char* kind) {
  for (double d : dims) {
    if (!(d > 0.0) || !std::isfinite(d)) {
      std::ostringstream os;
      os << kind << ": dimensions must be positive, got " << d;
      throw ArgumentError(os.str());
    }
  }
}

BrepModel make_box(double a, double b, double c) {
  require_positive({a, b, c}, "box");
  auto parts = box_parts(a, b, c, {});
  return BrepModel(std::move(parts.faces), std::move(parts.edges));
}

BrepModel make_cylinder(double r, double h) {
  require_positive({r, h}, "cylinder");
  std::vector<Face> faces;
  faces.push_back({0, cylinder_wall(0.0, 0.0, r, 0.0, h)});
  const TrimLoop disk = circle_loop(0.5, 0.5, 0.5, 0.5, LoopOrientation::kOuter);
  for (int cap = 0; cap < 2; ++cap) {
    const double z = cap * h;
    faces.push_back({1 + cap, bilinear({-r, -r, z}, {r, -r, z}, {-r, r, z}, {r, r, z}, {disk})});
  }
  std::vector<Edge> edges;
  edges.push_back({0, make_circle(0.0, 0.0, r, 0.0), {0, 1}});
  edges.push_back({1, make_circle(0.0, 0.0, r, h), {0, 2}});
  edges.push_back({2, line({r, 0.0, 0.0}, {r, 0.0, h}), {0, 0}});
  return BrepModel(std::move(faces), std::move(edges));
}

BrepModel make_trimmed_plate(double w, double d, double t, double rh) {
  require_positive({w, d, t, rh}, "trimmed_plate");
  if (!(2.0 * rh < std::min(w, d))) throw ArgumentError("trimmed_plate: hole does not fit inside the plate");
  const std::vector<TrimLoop> loops{unit_square_loop(),
                                    circle_loop(0.5, 0.5, rh / w, rh / d, LoopOrientation::kInner)};
  auto parts = box_parts(w, d, t, loops);
  const int wall = static_cast<int>(parts.faces.size());
  parts.faces.push_back({wall, cylinder_wall(0.5 * w, 0.5 * d, rh, 0.0, t)});
  auto add_edge = [&](NurbsCurve c, std::vector<int> bounds) {
    const int id = static_cast<int>(parts.edges.size());
    parts.edges.push_back({id, std::move(c), std::move(bounds)});
  };
  add_edge(make_circle(0.5 * w, 0.5 * d, rh, 0.0), {4, wall});
  add_edge(make_circle(0.5 * w, 0.5 * d, rh, t), {5, wall});
  add_edge(line({0.5 * w + rh, 0.5 * d, 0.0}, {0.5 * w + rh, 0.5 * d, t}), {wall, wall});
  return BrepModel(std::move(parts.faces), std::move(parts.edges));
}

BrepModel make_lofted_wedge(double a, double b, double h, double bulge) {
  require_positive({a, b, h}, "lofted_wedge");
  if (!(bulge >= 0.0)) throw ArgumentError("lofted_wedge: bulge must be non-negative");
  // Outward normal of the slope from (y=b, z=0) to (y=0, z=h).
  const double len = std::hypot(b, h);
  const double ny = h / len;
  const double nz = b / len;
  const double my = 0.5 * b + bulge * ny;
  const double mz = 0.5 * h + bulge * nz;

  auto profile = [&](double x) {
    return std::vector<HomogeneousPoint>{HomogeneousPoint::from_euclidean({x, b, 0.0}),
                                         HomogeneousPoint::from_euclidean({x, my, mz}),
                                         HomogeneousPoint::from_euclidean({x, 0.0, h})};
  };
  const KnotVector lin({0.0, 0.0, 1.0, 1.0}, 1);
  const KnotVector quad({0.0, 0.0, 0.0, 1.0, 1.0, 1.0}, 2);

  std::vector<Face> faces;
  faces.push_back({0, bilinear({0, 0, 0}, {a, 0, 0}, {0, b, 0}, {a, b, 0})});
  faces.push_back({1, bilinear({0, 0, 0}, {a, 0, 0}, {0, 0, h}, {a, 0, h})});
  {
    // u along x (degree 1), v across the loft (degree 2).
    std::vector<HomogeneousPoint> net;
    for (double x : {0.0, a}) {
      for (const auto& p : profile(x)) net.push_back(p);
    }
    faces.push_back({2, NurbsSurface(1, 2, lin, quad, std::move(net))});
  }
  for (int side = 0; side < 2; ++side) {
    // Ruled from the profile curve to the corner (x, 0, 0); u along the
    // profile (degree 2), v towards the corner (degree 1).
    const double x = side * a;
    const auto prof = profile(x);
    std::vector<HomogeneousPoint> net;
    for (const auto& p : prof) {
      net.push_back(p);
      net.push_back(HomogeneousPoint::from_euclidean({x, 0.0, 0.0}));
    }
    faces.push_back({3 + side, NurbsSurface(2, 1, quad, lin, std::move(net))});
  }

  std::vector<Edge> edges;
  auto add_edge = [&](NurbsCurve c, std::vector<int> bounds) {
    const int id = static_cast<int>(edges.size());
    edges.push_back({id, std::move(c), std::move(bounds)});
  };
  add_edge(line({0, b, 0}, {a, b, 0}), {0, 2});
  add_edge(line({0, 0, h}, {a, 0, h}), {1, 2});
  add_edge(line({0, 0, 0}, {a, 0, 0}), {0, 1});
  for (int side = 0; side < 2; ++side) {
    const double x = side * a;
    add_edge(NurbsCurve(2, quad, profile(x)), {3 + side, 2});
    add_edge(line({x, b, 0}, {x, 0, 0}), {3 + side, 0});
    add_edge(line({x, 0, 0}, {x, 0, h}), {3 + side, 1});
  }
  return BrepModel(std::move(faces), std::move(edges));
}

struct RigidMotion {
  std::array<std::array<double, 3>, 3> rot{};
  Vec3 shift;

  Vec3 apply(const Vec3& p) const {
    return {rot[0][0] * p.x + rot[0][1] * p.y + rot[0][2] * p.z + shift.x,
            rot[1][0] * p.x + rot[1][1] * p.y + rot[1][2] * p.z + shift.y,
            rot[2][0] * p.x + rot[2][1] * p.y + rot[2][2] * p.z + shift.z};
  }
  HomogeneousPoint apply(const HomogeneousPoint& h) const {
    return HomogeneousPoint::from_euclidean(apply(h.euclidean()), h.w);
  }
};

RigidMotion random_motion(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double q[4];
  double n = 0.0;
  do {
    n = 0.0;
    for (double& x : q) {
      x = gauss(rng);
      n += x * x;
    }
  } while (n < 1e-12);
  n = std::sqrt(n);
  for (double& x : q) x /= n;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  RigidMotion m;
  m.rot = {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
            {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
            {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
  m.shift = {uni(rng), uni(rng), uni(rng)};
  return m;
}

BrepModel transformed(const BrepModel& model, const RigidMotion& m) {
  std::vector<Face> faces;
  for (const auto& f : model.faces()) {
    const auto& s = f.surface;
    std::vector<HomogeneousPoint> net;
    for (const auto& p : s.control_net()) net.push_back(m.apply(p));
    faces.push_back({f.id, NurbsSurface(s.degree_u(), s.degree_v(), s.knots_u(), s.knots_v(), std::move(net),
                                        s.trim_loops())});
  }
  std::vector<Edge> edges;
  for (const auto& e : model.edges()) {
    std::vector<HomogeneousPoint> pts;
    for (const auto& p : e.curve.control_points()) pts.push_back(m.apply(p));
    edges.push_back({e.id, NurbsCurve(e.curve.degree(), e.curve.knots(), std::move(pts)), e.bounds_faces});
  }
  return BrepModel(std::move(faces), std::move(edges), model.label());
}

}  // namespace

NurbsCurve make_circle(double cx, double cy, double r, double z) {
  std::vector<HomogeneousPoint> pts;
  for (std::size_t i = 0; i < 9; ++i) {
    pts.push_back(HomogeneousPoint::from_euclidean(
        {cx + r * kCircleDirs[i][0], cy + r * kCircleDirs[i][1], z}, circle_weight(i)));
  }
  return NurbsCurve(2, kCircleKnots, std::move(pts));
}

NurbsCurve make_ellipse(double cx, double cy, double rx, double ry, double z) {
  std::vector<HomogeneousPoint> pts;
  for (std::size_t i = 0; i < 9; ++i) {
    pts.push_back(HomogeneousPoint::from_euclidean(
        {cx + rx * kCircleDirs[i][0], cy + ry * kCircleDirs[i][1], z}, circle_weight(i)));
  }
  return NurbsCurve(2, kCircleKnots, std::move(pts));
}

std::optional<SolidKind> parse_solid_kind(const std::string& name) {
  if (name == "box") return SolidKind::kBox;
  if (name == "cylinder") return SolidKind::kCylinder;
  if (name == "trimmed_plate") return SolidKind::kTrimmedPlate;
  if (name == "lofted_wedge") return SolidKind::kLoftedWedge;
  return std::nullopt;
}

std::string solid_kind_name(SolidKind kind) {
  switch (kind) {
    case SolidKind::kBox: return "box";
    case SolidKind::kCylinder: return "cylinder";
    case SolidKind::kTrimmedPlate: return "trimmed_plate";
    case SolidKind::kLoftedWedge: return "lofted_wedge";
  }
  return "unknown";
}

BrepModel generate_solid(SolidKind kind, const SolidParams& params, std::uint64_t seed) {
  if (!(params.jitter >= 0.0 && params.jitter < 1.0)) throw ArgumentError("jitter must be in [0, 1)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  auto jit = [&](double x) { return params.jitter > 0.0 ? x * (1.0 + params.jitter * uni(rng)) : x; };
  const double a = jit(params.a);
  const double b = jit(params.b);
  const double c = jit(params.c);
  const double d = jit(params.d);

  BrepModel model = [&] {
    switch (kind) {
      case SolidKind::kBox: return make_box(a, b, c);
      case SolidKind::kCylinder: return make_cylinder(a, b);
      case SolidKind::kTrimmedPlate: return make_trimmed_plate(a, b, c, d);
      case SolidKind::kLoftedWedge: return make_lofted_wedge(a, b, c, d);
    }
    throw ArgumentError("unknown solid kind");
  }();
  if (params.random_pose) model = transformed(model, random_motion(rng));
  return model;
}

BrepModel make_toy_model() {
  std::vector<Face> faces;
  faces.push_back({0, bilinear({0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0})});
  faces.push_back({1, bilinear({0, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 1, 1})});
  std::vector<Edge> edges;
  auto add_edge = [&](const Vec3& p, const Vec3& q, std::vector<int> bounds) {
    const int id = static_cast<int>(edges.size());
    edges.push_back({id, line(p, q), std::move(bounds)});
  };
  add_edge({0, 0, 0}, {0, 1, 0}, {0, 1});
  add_edge({0, 0, 0}, {1, 0, 0}, {0});
  add_edge({1, 0, 0}, {1, 1, 0}, {0});
  add_edge({1, 1, 0}, {0, 1, 0}, {0});
  add_edge({0, 0, 0}, {0, 0, 1}, {1});
  add_edge({0, 0, 1}, {0, 1, 1}, {1});
  add_edge({0, 1, 1}, {0, 1, 0}, {1});
  return BrepModel(std::move(faces), std::move(edges));
}

}  // namespace b2s
