#include <algorithm>
#include <limits>
#include <set>

#include "b2s/brep.hpp"
#include "b2s/errors.hpp"

namespace b2s {

namespace {

void check_incidence(const std::vector<Face>& faces, const std::vector<Edge>& edges) {
  const int nf = static_cast<int>(faces.size());
  for (const auto& e : edges) {
    if (e.bounds_faces.empty()) {
      throw IntegrityError("edge " + std::to_string(e.id) + " bounds no face");
    }
    for (int f : e.bounds_faces) {
      if (f < 0 || f >= nf) {
        throw IntegrityError("edge " + std::to_string(e.id) + " references missing face " + std::to_string(f));
      }
    }
  }
}

// Distinct faces bounded by an edge, ascending.
std::vector<int> face_set(const Edge& e) {
  std::vector<int> out = e.bounds_faces;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

BrepModel::BrepModel(std::vector<Face> faces, std::vector<Edge> edges, std::optional<int> label)
    : faces_(std::move(faces)), edges_(std::move(edges)), label_(label) {
  if (faces_.empty()) throw IntegrityError("model has no faces");
  if (edges_.empty()) throw IntegrityError("model has no edges");
  for (std::size_t i = 0; i < faces_.size(); ++i) {
    if (faces_[i].id != static_cast<int>(i)) {
      throw IntegrityError("face ids must be dense: position " + std::to_string(i) + " holds id " +
                           std::to_string(faces_[i].id));
    }
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (edges_[i].id != static_cast<int>(i)) {
      throw IntegrityError("edge ids must be dense: position " + std::to_string(i) + " holds id " +
                           std::to_string(edges_[i].id));
    }
  }
  check_incidence(faces_, edges_);
  std::vector<bool> used(faces_.size(), false);
  for (const auto& e : edges_) {
    for (int f : e.bounds_faces) used[static_cast<std::size_t>(f)] = true;
  }
  for (std::size_t f = 0; f < used.size(); ++f) {
    if (!used[f]) throw IntegrityError("face " + std::to_string(f) + " is bounded by no edge");
  }
}

FaceGraph build_face_graph(const BrepModel& model) {
  check_incidence(model.faces(), model.edges());
  FaceGraph g;
  g.node_count = model.face_count();
  for (const auto& e : model.edges()) {
    const auto fs = face_set(e);
    for (std::size_t i = 0; i < fs.size(); ++i) {
      for (std::size_t j = i + 1; j < fs.size(); ++j) g.adjacency[{fs[i], fs[j]}].push_back(e.id);
    }
  }
  for (auto& [key, ids] : g.adjacency) std::sort(ids.begin(), ids.end());
  return g;
}

EdgeGraph build_edge_graph(const BrepModel& model) {
  check_incidence(model.faces(), model.edges());
  std::vector<std::vector<int>> edges_of_face(static_cast<std::size_t>(model.face_count()));
  for (const auto& e : model.edges()) {
    for (int f : face_set(e)) edges_of_face[static_cast<std::size_t>(f)].push_back(e.id);
  }
  EdgeGraph g;
  g.node_count = model.edge_count();
  for (int f = 0; f < model.face_count(); ++f) {
    const auto& es = edges_of_face[static_cast<std::size_t>(f)];
    for (std::size_t i = 0; i < es.size(); ++i) {
      for (std::size_t j = i + 1; j < es.size(); ++j) {
        g.adjacency[{std::min(es[i], es[j]), std::max(es[i], es[j])}].push_back(f);
      }
    }
  }
  for (auto& [key, ids] : g.adjacency) std::sort(ids.begin(), ids.end());
  return g;
}

EdgeGraph edge_graph_from_face_graph(const FaceGraph& graph, const BrepModel& model) {
  std::vector<std::set<int>> edges_of_face(static_cast<std::size_t>(graph.node_count));
  std::set<int> shared;
  for (const auto& [key, ids] : graph.adjacency) {
    for (int e : ids) {
      edges_of_face[static_cast<std::size_t>(key.first)].insert(e);
      edges_of_face[static_cast<std::size_t>(key.second)].insert(e);
      shared.insert(e);
    }
  }
  // Edges bounding a single distinct face never label a face pair.
  for (const auto& e : model.edges()) {
    if (shared.count(e.id)) continue;
    for (int f : e.bounds_faces) edges_of_face[static_cast<std::size_t>(f)].insert(e.id);
  }
  EdgeGraph g;
  g.node_count = model.edge_count();
  for (int f = 0; f < graph.node_count; ++f) {
    const std::vector<int> es(edges_of_face[static_cast<std::size_t>(f)].begin(),
                              edges_of_face[static_cast<std::size_t>(f)].end());
    for (std::size_t i = 0; i < es.size(); ++i) {
      for (std::size_t j = i + 1; j < es.size(); ++j) g.adjacency[{es[i], es[j]}].push_back(f);
    }
  }
  for (auto& [key, ids] : g.adjacency) std::sort(ids.begin(), ids.end());
  return g;
}

ModelFrame model_frame(const BrepModel& model) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Vec3 lo{kInf, kInf, kInf};
  Vec3 hi{-kInf, -kInf, -kInf};
  auto grow = [&](const HomogeneousPoint& h) {
    const Vec3 p = h.euclidean();
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  };
  for (const auto& f : model.faces()) {
    for (const auto& p : f.surface.control_net()) grow(p);
  }
  for (const auto& e : model.edges()) {
    for (const auto& p : e.curve.control_points()) grow(p);
  }
  const double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  ModelFrame frame;
  frame.center = (lo + hi) * 0.5;
  frame.scale = extent > 0.0 ? 1.0 / extent : 1.0;
  return frame;
}

}  // namespace b2s
