#ifndef B2S_BREP_HPP_
#define B2S_BREP_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "b2s/geom.hpp"

namespace b2s {

struct Face {
  int id = 0;
  NurbsSurface surface;

  bool operator==(const Face&) const = default;
};

struct Edge {
  int id = 0;
  NurbsCurve curve;
  // Faces bounded by this edge; a seam lists its face twice.
  std::vector<int> bounds_faces;

  bool operator==(const Edge&) const = default;
};

// Immutable B-rep: faces, edges and edge-face incidence. Ids are dense and
// equal to the entity's position.
class BrepModel {
 public:
  BrepModel(std::vector<Face> faces, std::vector<Edge> edges, std::optional<int> label = std::nullopt);

  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<Edge>& edges() const { return edges_; }
  int face_count() const { return static_cast<int>(faces_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  std::optional<int> label() const { return label_; }

  bool operator==(const BrepModel&) const = default;

 private:
  std::vector<Face> faces_;
  std::vector<Edge> edges_;
  std::optional<int> label_;
};

using PairKey = std::pair<int, int>;  // (a, b) with a < b

// Faces adjacent through shared edges; each entry lists the shared edge ids.
struct FaceGraph {
  int node_count = 0;
  std::map<PairKey, std::vector<int>> adjacency;

  bool operator==(const FaceGraph&) const = default;
};

// Dual graph: edges adjacent through shared faces.
struct EdgeGraph {
  int node_count = 0;
  std::map<PairKey, std::vector<int>> adjacency;

  bool operator==(const EdgeGraph&) const = default;
};

FaceGraph build_face_graph(const BrepModel& model);
EdgeGraph build_edge_graph(const BrepModel& model);
// The same edge graph obtained by dualizing the face graph: every face's
// edge set is read off the face graph labels, plus boundary edges that
// appear in no face pair.
EdgeGraph edge_graph_from_face_graph(const FaceGraph& graph, const BrepModel& model);

// Normalization into the unit cube centred at the origin: the control-point
// bounding box is centred and its longest side scaled to 1.
struct ModelFrame {
  Vec3 center;
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p - center) * scale; }

  bool operator==(const ModelFrame&) const = default;
};
ModelFrame model_frame(const BrepModel& model);

enum class SolidKind { kBox, kCylinder, kTrimmedPlate, kLoftedWedge };

std::optional<SolidKind> parse_solid_kind(const std::string& name);
std::string solid_kind_name(SolidKind kind);

// Dimensions per kind:
//   box:           a, b, c = extents along x, y, z
//   cylinder:      a = radius, b = height
//   trimmed_plate: a, b = plate extents, c = thickness, d = hole radius
//   lofted_wedge:  a = length, b = depth, c = height, d = bulge of the loft
struct SolidParams {
  double a = 1.0;
  double b = 1.0;
  double c = 1.0;
  double d = 0.25;
  // Each dimension is scaled by (1 + jitter * U(-1, 1)) drawn from the seed.
  double jitter = 0.0;
  // Applies a seeded rigid motion to all model-space geometry.
  bool random_pose = false;
};

BrepModel generate_solid(SolidKind kind, const SolidParams& params, std::uint64_t seed = 0);
// Two unit squares hinged along one shared edge; 2 faces, 7 edges.
BrepModel make_toy_model();

// Unit circle of radius r about (cx, cy) as the 9-point rational quadratic,
// counter-clockwise from (cx + r, cy).
NurbsCurve make_circle(double cx, double cy, double r, double z = 0.0);
// Axis-aligned ellipse with semi-axes (rx, ry), same parameterization.
NurbsCurve make_ellipse(double cx, double cy, double rx, double ry, double z = 0.0);

std::string write_model_string(const BrepModel& model);
BrepModel read_model_string(const std::string& text);
void write_model(const BrepModel& model, const std::filesystem::path& path);
BrepModel read_model(const std::filesystem::path& path);

}  // namespace b2s

#endif  // B2S_BREP_HPP_
