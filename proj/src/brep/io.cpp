#include <cmath>
#include <set>
#include <string_view>

#include "b2s/brep.hpp"
#include "b2s/errors.hpp"
#include "b2s/io_util.hpp"
#include "json.hpp"

namespace b2s {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json point4(const HomogeneousPoint& h) {
  const Vec3 p = h.euclidean();
  return json::array({p.x, p.y, p.z, h.w});
}

json curve_json(const NurbsCurve& c, bool planar) {
  json pts = json::array();
  for (const auto& h : c.control_points()) {
    const Vec3 p = h.euclidean();
    pts.push_back(planar ? json::array({p.x, p.y, h.w}) : point4(h));
  }
  return json{{"degree", c.degree()}, {"knots", c.knots().knots()}, {"control_points", std::move(pts)}};
}

json surface_json(const Face& f) {
  const auto& s = f.surface;
  json net = json::array();
  for (int i = 0; i < s.count_u(); ++i) {
    json row = json::array();
    for (int j = 0; j < s.count_v(); ++j) row.push_back(point4(s.at(i, j)));
    net.push_back(std::move(row));
  }
  json loops = json::array();
  for (const auto& loop : s.trim_loops()) {
    json pcs = json::array();
    for (const auto& pc : loop.pcurves) pcs.push_back(curve_json(pc, true));
    loops.push_back({{"orientation", loop.orientation == LoopOrientation::kOuter ? "outer" : "inner"},
                     {"pcurves", std::move(pcs)}});
  }
  return json{{"id", f.id},
              {"degree_u", s.degree_u()},
              {"degree_v", s.degree_v()},
              {"knots_u", s.knots_u().knots()},
              {"knots_v", s.knots_v().knots()},
              {"control_net", std::move(net)},
              {"trim_loops", std::move(loops)}};
}

// Schema-checked access with a JSON-pointer-style path for diagnostics.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

  void expect_object(std::initializer_list<const char*> required, std::initializer_list<const char*> optional = {}) const {
    if (!j_.is_object()) fail("expected an object");
    std::set<std::string> allowed;
    for (const char* k : required) {
      allowed.insert(k);
      if (!j_.contains(k)) throw ParseError(path_ + "/" + k + ": missing field");
    }
    for (const char* k : optional) allowed.insert(k);
    for (const auto& [key, value] : j_.items()) {
      if (!allowed.count(key)) throw ParseError(path_ + "/" + key + ": unknown field");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  Node operator[](std::string_view key) const {
    return Node(j_.at(std::string(key)), path_ + "/" + std::string(key));
  }
  Node operator[](std::size_t i) const { return Node(j_.at(i), path_ + "/" + std::to_string(i)); }

  std::size_t array_size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("non-finite number");
    return v;
  }

  int integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<int>();
  }

  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }

  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < array_size(); ++i) out.push_back((*this)[i].number());
    return out;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_ + ": " + what); }

 private:
  const json& j_;
  std::string path_;
};

// Re-labels construction failures as integrity errors at `path`.
template <typename Fn>
auto build(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw IntegrityError(path + ": " + e.what());
  }
}

HomogeneousPoint read_point(const Node& n, bool planar) {
  const std::size_t want = planar ? 3 : 4;
  if (n.array_size() != want) n.fail("expected " + std::to_string(want) + " numbers");
  if (planar) {
    return build(n.path(), [&] { return HomogeneousPoint::from_euclidean({n[0].number(), n[1].number(), 0.0}, n[2].number()); });
  }
  return build(n.path(), [&] {
    return HomogeneousPoint::from_euclidean({n[0].number(), n[1].number(), n[2].number()}, n[3].number());
  });
}

NurbsCurve read_curve(const Node& n, bool planar) {
  n.expect_object({"degree", "knots", "control_points"});
  const int degree = n["degree"].integer();
  std::vector<double> knots = n["knots"].numbers();
  const Node cps = n["control_points"];
  std::vector<HomogeneousPoint> pts;
  for (std::size_t i = 0; i < cps.array_size(); ++i) pts.push_back(read_point(cps[i], planar));
  return build(n.path(), [&] { return NurbsCurve(degree, std::move(knots), std::move(pts)); });
}

Face read_face(const Node& n) {
  n.expect_object({"id", "degree_u", "degree_v", "knots_u", "knots_v", "control_net"}, {"trim_loops"});
  const int id = n["id"].integer();
  const int p = n["degree_u"].integer();
  const int q = n["degree_v"].integer();
  std::vector<double> ku = n["knots_u"].numbers();
  std::vector<double> kv = n["knots_v"].numbers();
  const Node net = n["control_net"];
  std::vector<HomogeneousPoint> pts;
  std::size_t row_len = 0;
  for (std::size_t i = 0; i < net.array_size(); ++i) {
    const Node row = net[i];
    if (i == 0) row_len = row.array_size();
    if (row.array_size() != row_len) row.fail("ragged control net");
    for (std::size_t j = 0; j < row_len; ++j) pts.push_back(read_point(row[j], false));
  }
  std::vector<TrimLoop> loops;
  if (n.has("trim_loops")) {
    const Node ls = n["trim_loops"];
    for (std::size_t i = 0; i < ls.array_size(); ++i) {
      const Node l = ls[i];
      l.expect_object({"orientation", "pcurves"});
      TrimLoop loop;
      const std::string o = l["orientation"].string();
      if (o == "outer") {
        loop.orientation = LoopOrientation::kOuter;
      } else if (o == "inner") {
        loop.orientation = LoopOrientation::kInner;
      } else {
        l["orientation"].fail("expected \"outer\" or \"inner\"");
      }
      const Node pcs = l["pcurves"];
      for (std::size_t c = 0; c < pcs.array_size(); ++c) loop.pcurves.push_back(read_curve(pcs[c], true));
      loops.push_back(std::move(loop));
    }
  }
  return build(n.path(), [&] {
    return Face{id, NurbsSurface(p, q, KnotVector(std::move(ku), p), KnotVector(std::move(kv), q), std::move(pts),
                                 std::move(loops))};
  });
}

Edge read_edge(const Node& n) {
  n.expect_object({"id", "degree", "knots", "control_points", "bounds_faces"});
  Edge e;
  e.id = n["id"].integer();
  const int degree = n["degree"].integer();
  std::vector<double> knots = n["knots"].numbers();
  const Node cps = n["control_points"];
  std::vector<HomogeneousPoint> pts;
  for (std::size_t i = 0; i < cps.array_size(); ++i) pts.push_back(read_point(cps[i], false));
  e.curve = build(n.path(), [&] { return NurbsCurve(degree, std::move(knots), std::move(pts)); });
  const Node bf = n["bounds_faces"];
  for (std::size_t i = 0; i < bf.array_size(); ++i) e.bounds_faces.push_back(bf[i].integer());
  return e;
}

}  // namespace

std::string write_model_string(const BrepModel& model) {
  json faces = json::array();
  for (const auto& f : model.faces()) faces.push_back(surface_json(f));
  json edges = json::array();
  for (const auto& e : model.edges()) {
    json j = curve_json(e.curve, false);
    j["id"] = e.id;
    j["bounds_faces"] = e.bounds_faces;
    edges.push_back(std::move(j));
  }
  json doc{{"version", kFormatVersion}, {"faces", std::move(faces)}, {"edges", std::move(edges)}};
  if (model.label()) doc["label"] = *model.label();
  return doc.dump(1) + "\n";
}

BrepModel read_model_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed document: ") + e.what());
  }
  const Node root(doc, "");
  root.expect_object({"version", "faces", "edges"}, {"label"});
  if (root["version"].integer() != kFormatVersion) root["version"].fail("unsupported version");
  std::vector<Face> faces;
  const Node fs = root["faces"];
  for (std::size_t i = 0; i < fs.array_size(); ++i) faces.push_back(read_face(fs[i]));
  std::vector<Edge> edges;
  const Node es = root["edges"];
  for (std::size_t i = 0; i < es.array_size(); ++i) edges.push_back(read_edge(es[i]));
  std::optional<int> label;
  if (root.has("label")) label = root["label"].integer();
  return BrepModel(std::move(faces), std::move(edges), label);
}

void write_model(const BrepModel& model, const std::filesystem::path& path) {
  atomic_write(path, write_model_string(model));
}

BrepModel read_model(const std::filesystem::path& path) { return read_model_string(read_text(path)); }

}  // namespace b2s
