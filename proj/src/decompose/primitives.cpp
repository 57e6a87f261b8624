#include "b2s/primitives.hpp"

#include <algorithm>
#include <cmath>

#include "b2s/errors.hpp"
#include "b2s/io_util.hpp"
#include "json.hpp"

namespace b2s {

namespace {

using nlohmann::json;

json hpoints(const std::vector<HomogeneousPoint>& pts) {
  json out = json::array();
  for (const auto& p : pts) out.push_back(json::array({p.wx, p.wy, p.wz, p.w}));
  return out;
}

std::vector<HomogeneousPoint> read_hpoints(const json& j) {
  std::vector<HomogeneousPoint> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 4) throw ParseError("primitive control point must have 4 numbers");
    HomogeneousPoint h{p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), p[3].get<double>()};
    check_point(h);
    out.push_back(h);
  }
  return out;
}

const char* cell_class_name(CellClass c) {
  switch (c) {
    case CellClass::kInterior: return "interior";
    case CellClass::kExterior: return "exterior";
    case CellClass::kBoundary: return "boundary";
  }
  return "?";
}

CellClass parse_cell_class(const std::string& s) {
  if (s == "interior") return CellClass::kInterior;
  if (s == "exterior") return CellClass::kExterior;
  if (s == "boundary") return CellClass::kBoundary;
  throw ParseError("unknown cell class " + s);
}

}  // namespace

ModelPrimitives decompose_model(const BrepModel& model, const DecomposeOptions& options) {
  ModelPrimitives out;
  out.options = options;
  for (const auto& f : model.faces()) {
    const int d = f.surface.degree_u() + f.surface.degree_v();
    if (d > options.triangle_degree) {
      throw ArgumentError("face " + std::to_string(f.id) + ": bi-degree (" + std::to_string(f.surface.degree_u()) +
                          ", " + std::to_string(f.surface.degree_v()) + ") exceeds the standard triangle degree " +
                          std::to_string(options.triangle_degree));
    }
    QuadtreeResult qt = quadtree_decompose(f.surface, options.tau, options.max_depth, f.id);
    FacePrimitives fp;
    for (const auto& tri : qt.triangles) fp.triangles.push_back(elevate_triangle_degree(tri, options.triangle_degree));
    fp.cells = std::move(qt.cells);
    fp.report = std::move(qt.report);
    fp.unconverged_cells = qt.unconverged.size();
    out.faces.push_back(std::move(fp));
  }
  for (const auto& e : model.edges()) {
    if (e.curve.degree() > options.curve_degree) {
      throw ArgumentError("edge " + std::to_string(e.id) + ": degree " + std::to_string(e.curve.degree()) +
                          " exceeds the standard curve degree " + std::to_string(options.curve_degree));
    }
    EdgePrimitives ep;
    for (const auto& seg : curve_to_bezier_segments(e.curve, e.id)) {
      ep.segments.push_back(elevate_segment_degree(seg, options.curve_degree));
    }
    out.edges.push_back(std::move(ep));
  }
  return out;
}

PrimitiveSelection select_primitives(const ModelPrimitives& prims, const PrimitiveCaps& caps) {
  if (caps.face < 1 || caps.edge < 1) throw ArgumentError("primitive caps must be positive");
  PrimitiveSelection out;
  for (std::size_t f = 0; f < prims.faces.size(); ++f) {
    std::vector<double> area;
    for (const auto& t : prims.faces[f].triangles) area.push_back(triangle_area(t));
    if (area.size() > static_cast<std::size_t>(caps.face)) {
      out.warnings.push_back("face " + std::to_string(f) + ": " + std::to_string(area.size()) +
                             " triangles exceed the cap of " + std::to_string(caps.face));
    }
    out.faces.push_back(select_largest(area, static_cast<std::size_t>(caps.face)));
  }
  for (std::size_t e = 0; e < prims.edges.size(); ++e) {
    std::vector<double> len;
    for (const auto& s : prims.edges[e].segments) len.push_back(segment_length(s));
    if (len.size() > static_cast<std::size_t>(caps.edge)) {
      out.warnings.push_back("edge " + std::to_string(e) + ": " + std::to_string(len.size()) +
                             " segments exceed the cap of " + std::to_string(caps.edge));
    }
    out.edges.push_back(select_largest(len, static_cast<std::size_t>(caps.edge)));
  }
  return out;
}

void check_primitives(const BrepModel& model, const ModelPrimitives& prims) {
  if (prims.faces.size() != model.faces().size() || prims.edges.size() != model.edges().size()) {
    throw IntegrityError("primitive set does not match the model's entity counts");
  }
  for (std::size_t f = 0; f < prims.faces.size(); ++f) {
    if (prims.faces[f].triangles.empty()) throw IntegrityError("face " + std::to_string(f) + " has no primitives");
    for (const auto& t : prims.faces[f].triangles) {
      if (t.degree != prims.options.triangle_degree ||
          t.control_points.size() != BezierTriangle::count(prims.options.triangle_degree)) {
        throw IntegrityError("face " + std::to_string(f) + " carries an unstandardized triangle");
      }
      if (t.source.entity != static_cast<int>(f)) throw IntegrityError("triangle source does not match face " + std::to_string(f));
    }
  }
  for (std::size_t e = 0; e < prims.edges.size(); ++e) {
    if (prims.edges[e].segments.empty()) throw IntegrityError("edge " + std::to_string(e) + " has no primitives");
    for (const auto& s : prims.edges[e].segments) {
      if (s.degree != prims.options.curve_degree ||
          s.control_points.size() != static_cast<std::size_t>(prims.options.curve_degree + 1)) {
        throw IntegrityError("edge " + std::to_string(e) + " carries an unstandardized segment");
      }
      if (s.source.entity != static_cast<int>(e)) throw IntegrityError("segment source does not match edge " + std::to_string(e));
    }
  }
}

double max_decomposition_residual(const BrepModel& model, const ModelPrimitives& prims, int samples) {
  double worst = 0.0;
  for (std::size_t f = 0; f < prims.faces.size(); ++f) {
    const auto& surface = model.faces()[f].surface;
    for (const auto& tri : prims.faces[f].triangles) {
      for (int a = 0; a <= samples; ++a) {
        for (int b = 0; a + b <= samples; ++b) {
          const double u = static_cast<double>(a) / samples;
          const double v = static_cast<double>(b) / samples;
          const auto [su, sv] = triangle_to_surface_params(tri.source, u, v);
          worst = std::max(worst, norm(eval_bezier_triangle(tri, u, v) - eval_surface(surface, su, sv)));
        }
      }
    }
  }
  for (std::size_t e = 0; e < prims.edges.size(); ++e) {
    const auto& curve = model.edges()[e].curve;
    for (const auto& seg : prims.edges[e].segments) {
      for (int k = 0; k <= samples; ++k) {
        const double t = static_cast<double>(k) / samples;
        const double u = seg.source.t0 + t * (seg.source.t1 - seg.source.t0);
        worst = std::max(worst, norm(eval_bezier_segment(seg, t) - eval_curve(curve, u)));
      }
    }
  }
  return worst;
}

std::string write_primitives_string(const ModelPrimitives& prims) {
  json faces = json::array();
  for (const auto& f : prims.faces) {
    json tris = json::array();
    for (const auto& t : f.triangles) {
      tris.push_back({{"degree", t.degree},
                      {"control_points", hpoints(t.control_points)},
                      {"entity", t.source.entity},
                      {"cell", {t.source.u0, t.source.u1, t.source.v0, t.source.v1}},
                      {"half", t.source.half == TriangleHalf::kLower ? "lower" : "upper"}});
    }
    json cells = json::array();
    for (const auto& c : f.cells) {
      cells.push_back({{"depth", c.depth},
                       {"ix", c.ix},
                       {"iy", c.iy},
                       {"class", cell_class_name(c.cls)},
                       {"converged", c.converged},
                       {"bounds", {c.u0, c.u1, c.v0, c.v1}}});
    }
    faces.push_back({{"triangles", std::move(tris)},
                     {"cells", std::move(cells)},
                     {"unconverged_cells", f.unconverged_cells},
                     {"report",
                      {{"max_step", f.report.max_step},
                       {"arc_length", f.report.arc_length},
                       {"squared_error", f.report.squared_error},
                       {"rmse", f.report.rmse},
                       {"chord_to_arc", f.report.chord_to_arc},
                       {"curvature", f.report.curvature}}}});
  }
  json edges = json::array();
  for (const auto& e : prims.edges) {
    json segs = json::array();
    for (const auto& s : e.segments) {
      segs.push_back({{"degree", s.degree},
                      {"control_points", hpoints(s.control_points)},
                      {"entity", s.source.entity},
                      {"span", {s.source.t0, s.source.t1}}});
    }
    edges.push_back({{"segments", std::move(segs)}});
  }
  const auto& o = prims.options;
  json doc{{"version", 1},
           {"options",
            {{"tau", o.tau},
             {"max_depth", o.max_depth},
             {"curve_degree", o.curve_degree},
             {"triangle_degree", o.triangle_degree}}},
           {"faces", std::move(faces)},
           {"edges", std::move(edges)}};
  return doc.dump() + "\n";
}

ModelPrimitives read_primitives_string(const std::string& text) {
  ModelPrimitives out;
  try {
    const json doc = json::parse(text);
    if (doc.at("version").get<int>() != 1) throw ParseError("unsupported primitives version");
    const auto& o = doc.at("options");
    out.options.tau = o.at("tau").get<double>();
    out.options.max_depth = o.at("max_depth").get<int>();
    out.options.curve_degree = o.at("curve_degree").get<int>();
    out.options.triangle_degree = o.at("triangle_degree").get<int>();
    for (const auto& fj : doc.at("faces")) {
      FacePrimitives f;
      for (const auto& tj : fj.at("triangles")) {
        BezierTriangle t;
        t.degree = tj.at("degree").get<int>();
        t.control_points = read_hpoints(tj.at("control_points"));
        const auto cell = tj.at("cell").get<std::vector<double>>();
        if (cell.size() != 4) throw ParseError("triangle cell must have 4 bounds");
        const std::string half = tj.at("half").get<std::string>();
        if (half != "lower" && half != "upper") throw ParseError("triangle half must be lower or upper");
        t.source = {tj.at("entity").get<int>(), cell[0], cell[1], cell[2], cell[3],
                    half == "lower" ? TriangleHalf::kLower : TriangleHalf::kUpper};
        if (t.control_points.size() != BezierTriangle::count(t.degree)) {
          throw IntegrityError("triangle control point count does not match its degree");
        }
        f.triangles.push_back(std::move(t));
      }
      for (const auto& cj : fj.at("cells")) {
        QuadCell c;
        c.depth = cj.at("depth").get<int>();
        c.ix = cj.at("ix").get<std::uint32_t>();
        c.iy = cj.at("iy").get<std::uint32_t>();
        c.cls = parse_cell_class(cj.at("class").get<std::string>());
        c.converged = cj.at("converged").get<bool>();
        const auto b = cj.at("bounds").get<std::vector<double>>();
        if (b.size() != 4) throw ParseError("cell bounds must have 4 numbers");
        c.u0 = b[0];
        c.u1 = b[1];
        c.v0 = b[2];
        c.v1 = b[3];
        f.cells.push_back(c);
      }
      f.unconverged_cells = fj.at("unconverged_cells").get<std::size_t>();
      const auto& r = fj.at("report");
      f.report.max_step = r.at("max_step").get<double>();
      f.report.arc_length = r.at("arc_length").get<double>();
      f.report.squared_error = r.at("squared_error").get<double>();
      f.report.rmse = r.at("rmse").get<double>();
      f.report.chord_to_arc = r.at("chord_to_arc").get<std::vector<double>>();
      f.report.curvature = r.at("curvature").get<std::vector<double>>();
      out.faces.push_back(std::move(f));
    }
    for (const auto& ej : doc.at("edges")) {
      EdgePrimitives e;
      for (const auto& sj : ej.at("segments")) {
        BezierSegment s;
        s.degree = sj.at("degree").get<int>();
        s.control_points = read_hpoints(sj.at("control_points"));
        const auto span = sj.at("span").get<std::vector<double>>();
        if (span.size() != 2) throw ParseError("segment span must have 2 numbers");
        s.source = {sj.at("entity").get<int>(), span[0], span[1]};
        if (s.control_points.size() != static_cast<std::size_t>(s.degree + 1)) {
          throw IntegrityError("segment control point count does not match its degree");
        }
        e.segments.push_back(std::move(s));
      }
      out.edges.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed primitives file: ") + e.what());
  } catch (const ArgumentError& e) {
    throw IntegrityError(std::string("invalid primitive: ") + e.what());
  }
  return out;
}

void write_primitives(const ModelPrimitives& prims, const std::filesystem::path& path) {
  atomic_write(path, write_primitives_string(prims));
}

ModelPrimitives read_primitives(const std::filesystem::path& path) {
  return read_primitives_string(read_text(path));
}

}  // namespace b2s
