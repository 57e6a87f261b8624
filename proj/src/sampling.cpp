#include "b2s/sampling.hpp"

#include <cmath>

#include "b2s/errors.hpp"
#include "b2s/io_util.hpp"

namespace b2s {

namespace {

constexpr std::uint32_t kVersion = 1;

// Plastic number, the R2 sequence's generator.
constexpr double kPlastic = 1.32471795724474602596;

void put(std::vector<double>& dst, std::size_t slot, const Vec3& p) {
  dst[3 * slot] = p.x;
  dst[3 * slot + 1] = p.y;
  dst[3 * slot + 2] = p.z;
}

}  // namespace

std::vector<double> curve_sample_params(int m) {
  if (m < 1) throw ArgumentError("points per primitive must be at least 1");
  if (m == 1) return {0.5};
  std::vector<double> t;
  for (int k = 0; k < m; ++k) t.push_back(k == m - 1 ? 1.0 : static_cast<double>(k) / (m - 1));
  return t;
}

std::vector<std::pair<double, double>> triangle_sample_params(int m) {
  if (m < 1) throw ArgumentError("points per primitive must be at least 1");
  const double a1 = 1.0 / kPlastic;
  const double a2 = 1.0 / (kPlastic * kPlastic);
  std::vector<std::pair<double, double>> out;
  for (int k = 1; out.size() < static_cast<std::size_t>(m); ++k) {
    double u = std::fmod(0.5 + a1 * k, 1.0);
    double v = std::fmod(0.5 + a2 * k, 1.0);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    constexpr double kEdge = 1e-9;
    if (u < kEdge || v < kEdge || u + v > 1.0 - kEdge) continue;
    out.emplace_back(u, v);
  }
  return out;
}

ShapeTargets sample_entity_points(const BrepModel& model, const ModelPrimitives& prims, int m,
                                  const PrimitiveCaps& caps) {
  check_primitives(model, prims);
  const PrimitiveSelection sel = select_primitives(prims, caps);
  ShapeTargets out;
  out.m = m;
  out.face_cap = caps.face;
  out.edge_cap = caps.edge;
  out.face_count = model.face_count();
  out.edge_count = model.edge_count();
  out.frame = model_frame(model);
  const auto fs = static_cast<std::size_t>(out.face_slots());
  const auto es = static_cast<std::size_t>(out.edge_slots());
  out.face_points.assign(fs * static_cast<std::size_t>(out.face_count) * 3, 0.0);
  out.face_mask.assign(fs * static_cast<std::size_t>(out.face_count), 0);
  out.edge_points.assign(es * static_cast<std::size_t>(out.edge_count) * 3, 0.0);
  out.edge_mask.assign(es * static_cast<std::size_t>(out.edge_count), 0);

  const auto tri_uv = triangle_sample_params(m);
  const auto seg_t = curve_sample_params(m);
  for (std::size_t f = 0; f < sel.faces.size(); ++f) {
    std::size_t slot = f * fs;
    for (std::size_t k : sel.faces[f]) {
      const BezierTriangle& tri = prims.faces[f].triangles[k];
      for (const auto& [u, v] : tri_uv) {
        put(out.face_points, slot, out.frame.apply(eval_bezier_triangle(tri, u, v)));
        out.face_mask[slot++] = 1;
      }
    }
  }
  for (std::size_t e = 0; e < sel.edges.size(); ++e) {
    std::size_t slot = e * es;
    for (std::size_t k : sel.edges[e]) {
      const BezierSegment& seg = prims.edges[e].segments[k];
      for (double t : seg_t) {
        put(out.edge_points, slot, out.frame.apply(eval_bezier_segment(seg, t)));
        out.edge_mask[slot++] = 1;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> write_targets_bytes(const ShapeTargets& t) {
  ByteWriter w;
  w.magic("B2S1");
  w.u32(kVersion);
  w.u64(static_cast<std::uint64_t>(t.face_count));
  w.u64(static_cast<std::uint64_t>(t.edge_count));
  w.u32(static_cast<std::uint32_t>(t.m));
  w.u32(static_cast<std::uint32_t>(t.face_cap));
  w.u32(static_cast<std::uint32_t>(t.edge_cap));
  w.f64(t.frame.center.x);
  w.f64(t.frame.center.y);
  w.f64(t.frame.center.z);
  w.f64(t.frame.scale);
  for (double x : t.face_points) w.f64(x);
  for (auto b : t.face_mask) w.u8(b);
  for (double x : t.edge_points) w.f64(x);
  for (auto b : t.edge_mask) w.u8(b);
  return w.bytes();
}

ShapeTargets read_targets_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("B2S1");
  if (r.u32() != kVersion) throw ParseError("unsupported sample file version");
  ShapeTargets t;
  const std::uint64_t nf = r.u64();
  const std::uint64_t ne = r.u64();
  t.m = static_cast<int>(r.u32());
  t.face_cap = static_cast<int>(r.u32());
  t.edge_cap = static_cast<int>(r.u32());
  if (t.m < 1 || t.face_cap < 1 || t.edge_cap < 1 || nf > (1u << 24) || ne > (1u << 24)) {
    throw ParseError("sample file header out of range");
  }
  t.face_count = static_cast<int>(nf);
  t.edge_count = static_cast<int>(ne);
  t.frame.center.x = r.f64();
  t.frame.center.y = r.f64();
  t.frame.center.z = r.f64();
  t.frame.scale = r.f64();
  const std::uint64_t fslots = nf * static_cast<std::uint64_t>(t.face_slots());
  const std::uint64_t eslots = ne * static_cast<std::uint64_t>(t.edge_slots());
  if (fslots * 25 + eslots * 25 != r.remaining()) throw ParseError("sample file size does not match its header");
  t.face_points.resize(fslots * 3);
  for (double& x : t.face_points) x = r.f64();
  t.face_mask.resize(fslots);
  for (auto& b : t.face_mask) b = r.u8();
  t.edge_points.resize(eslots * 3);
  for (double& x : t.edge_points) x = r.f64();
  t.edge_mask.resize(eslots);
  for (auto& b : t.edge_mask) b = r.u8();
  return t;
}

void write_targets(const ShapeTargets& targets, const std::filesystem::path& path) {
  atomic_write(path, write_targets_bytes(targets));
}

ShapeTargets read_targets(const std::filesystem::path& path) { return read_targets_bytes(read_bytes(path)); }

}  // namespace b2s
