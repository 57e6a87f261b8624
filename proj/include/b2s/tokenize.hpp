#ifndef B2S_TOKENIZE_HPP_
#define B2S_TOKENIZE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "b2s/brep.hpp"
#include "b2s/primitives.hpp"

namespace b2s {

// Pair (a, b), a < b, joined through shared entity `shared` of the other kind.
// Pairs sharing several entities appear once per shared entity.
struct AdjacencyTriple {
  int a = 0;
  int b = 0;
  int shared = 0;

  bool operator==(const AdjacencyTriple&) const = default;
};

// Fixed-shape model input for one or more models. Entity indices are global
// over the batch; model i owns faces [face_offset(i), face_offset(i + 1)).
// Control points are (x, y, z, w): euclidean in the model's normalized
// frame, weight raw.
struct TokenBatch {
  int face_cap = 0;
  int edge_cap = 0;
  int triangle_degree = kStandardTriangleDegree;
  int curve_degree = kStandardCurveDegree;
  std::vector<int> face_counts;
  std::vector<int> edge_counts;
  std::vector<ModelFrame> frames;
  std::vector<double> face_tensor;  // N_f * face_cap * triangle_points() * 4
  std::vector<std::uint8_t> face_primitive_mask;  // N_f * face_cap
  std::vector<double> edge_tensor;  // N_e * edge_cap * segment_points() * 4
  std::vector<std::uint8_t> edge_primitive_mask;  // N_e * edge_cap
  std::vector<AdjacencyTriple> face_adjacency;  // shared = edge index
  std::vector<AdjacencyTriple> edge_adjacency;  // shared = face index
  std::vector<std::string> warnings;

  int model_count() const { return static_cast<int>(face_counts.size()); }
  int face_total() const;
  int edge_total() const;
  int face_offset(int model) const;
  int edge_offset(int model) const;
  int triangle_points() const { return static_cast<int>(BezierTriangle::count(triangle_degree)); }
  int segment_points() const { return curve_degree + 1; }
  int face_features() const { return triangle_points() * 4; }
  int edge_features() const { return segment_points() * 4; }

  bool operator==(const TokenBatch&) const = default;
};

TokenBatch tokenize_model(const BrepModel& model, const ModelPrimitives& prims, const PrimitiveCaps& caps = {});
// Concatenates batches with identical caps and degrees; adjacency indices
// are shifted so no pair crosses models.
TokenBatch concat_batches(std::span<const TokenBatch> batches);
// The single-model batch `model` of a multi-model batch. Warnings are not
// carried over.
TokenBatch slice_batch(const TokenBatch& batch, int model);

// Throws IntegrityError on inconsistent sizes or out-of-range indices.
void check_batch(const TokenBatch& batch);

// Primitive stored in slot `slot` of entity `entity`, in the normalized frame.
BezierTriangle detokenize_triangle(const TokenBatch& batch, int face, int slot);
BezierSegment detokenize_segment(const TokenBatch& batch, int edge, int slot);

std::vector<std::uint8_t> write_batch_bytes(const TokenBatch& batch);
TokenBatch read_batch_bytes(std::span<const std::uint8_t> bytes);
void write_batch(const TokenBatch& batch, const std::filesystem::path& path);
TokenBatch read_batch(const std::filesystem::path& path);

}  // namespace b2s

#endif  // B2S_TOKENIZE_HPP_
