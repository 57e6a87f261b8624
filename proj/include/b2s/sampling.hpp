#ifndef B2S_SAMPLING_HPP_
#define B2S_SAMPLING_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "b2s/brep.hpp"
#include "b2s/primitives.hpp"

namespace b2s {

inline constexpr int kDefaultPointsPerPrimitive = 3;

// Padded point targets in the model's normalized frame. Entity j owns slots
// [j * slots, (j + 1) * slots); primitive k of the kept set fills slots
// [k * m, (k + 1) * m).
struct ShapeTargets {
  int m = kDefaultPointsPerPrimitive;
  int face_cap = 0;
  int edge_cap = 0;
  int face_count = 0;
  int edge_count = 0;
  ModelFrame frame;
  std::vector<double> face_points;  // face_count * face_slots() * 3
  std::vector<std::uint8_t> face_mask;
  std::vector<double> edge_points;  // edge_count * edge_slots() * 3
  std::vector<std::uint8_t> edge_mask;

  int face_slots() const { return face_cap * m; }
  int edge_slots() const { return edge_cap * m; }

  bool operator==(const ShapeTargets&) const = default;
};

// Curve parameters: m uniform values on [0, 1] with both ends, or the
// midpoint when m = 1.
std::vector<double> curve_sample_params(int m);
// m points of the R2 additive recurrence folded into the unit triangle;
// no point lies on the triangle's boundary.
std::vector<std::pair<double, double>> triangle_sample_params(int m);

ShapeTargets sample_entity_points(const BrepModel& model, const ModelPrimitives& prims,
                                  int m = kDefaultPointsPerPrimitive, const PrimitiveCaps& caps = {});

std::vector<std::uint8_t> write_targets_bytes(const ShapeTargets& targets);
ShapeTargets read_targets_bytes(std::span<const std::uint8_t> bytes);
void write_targets(const ShapeTargets& targets, const std::filesystem::path& path);
ShapeTargets read_targets(const std::filesystem::path& path);

}  // namespace b2s

#endif  // B2S_SAMPLING_HPP_
