#ifndef B2S_PRIMITIVES_HPP_
#define B2S_PRIMITIVES_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "b2s/brep.hpp"
#include "b2s/decompose.hpp"

namespace b2s {

struct FacePrimitives {
  std::vector<BezierTriangle> triangles;
  std::vector<QuadCell> cells;
  BoundaryErrorReport report;
  std::size_t unconverged_cells = 0;
};

struct EdgePrimitives {
  std::vector<BezierSegment> segments;
};

struct DecomposeOptions {
  double tau = kDefaultTau;
  int max_depth = kDefaultMaxDepth;
  int curve_degree = kStandardCurveDegree;
  int triangle_degree = kStandardTriangleDegree;
};

// Whole-model decomposition with every primitive elevated to the standard
// degrees. Entities above those degrees are rejected.
struct ModelPrimitives {
  DecomposeOptions options;
  std::vector<FacePrimitives> faces;
  std::vector<EdgePrimitives> edges;
};

// Per-entity primitive caps shared by sampling and tokenization.
struct PrimitiveCaps {
  int face = 32;
  int edge = 8;
};

// Primitive indices kept under `caps`: largest triangles by corner area and
// longest segments by chord polygon length, ties by index, ascending order.
struct PrimitiveSelection {
  std::vector<std::vector<std::size_t>> faces;
  std::vector<std::vector<std::size_t>> edges;
  std::vector<std::string> warnings;
};
PrimitiveSelection select_primitives(const ModelPrimitives& prims, const PrimitiveCaps& caps);

ModelPrimitives decompose_model(const BrepModel& model, const DecomposeOptions& options = {});

// Largest |original - primitive| over `samples` points per primitive,
// mapped back through each primitive's source parameters.
double max_decomposition_residual(const BrepModel& model, const ModelPrimitives& prims, int samples = 16);

// Throws IntegrityError unless `prims` has one entry per model entity and
// every primitive carries the standard degree.
void check_primitives(const BrepModel& model, const ModelPrimitives& prims);

std::string write_primitives_string(const ModelPrimitives& prims);
ModelPrimitives read_primitives_string(const std::string& text);
void write_primitives(const ModelPrimitives& prims, const std::filesystem::path& path);
ModelPrimitives read_primitives(const std::filesystem::path& path);

}  // namespace b2s

#endif  // B2S_PRIMITIVES_HPP_
