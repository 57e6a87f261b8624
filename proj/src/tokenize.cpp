#include "b2s/tokenize.hpp"

#include <numeric>

#include "b2s/errors.hpp"
#include "b2s/io_util.hpp"

namespace b2s {

namespace {

constexpr std::uint32_t kVersion = 1;

void put(std::vector<double>& dst, std::size_t at, const HomogeneousPoint& h, const ModelFrame& frame) {
  const Vec3 p = frame.apply(h.euclidean());
  dst[at] = p.x;
  dst[at + 1] = p.y;
  dst[at + 2] = p.z;
  dst[at + 3] = h.w;
}

HomogeneousPoint take(const std::vector<double>& src, std::size_t at) {
  return HomogeneousPoint::from_euclidean({src[at], src[at + 1], src[at + 2]}, src[at + 3]);
}

void append_triples(std::vector<AdjacencyTriple>& dst, const std::map<PairKey, std::vector<int>>& adj) {
  for (const auto& [key, shared] : adj) {
    for (int s : shared) dst.push_back({key.first, key.second, s});
  }
}

}  // namespace

int TokenBatch::face_total() const { return std::accumulate(face_counts.begin(), face_counts.end(), 0); }
int TokenBatch::edge_total() const { return std::accumulate(edge_counts.begin(), edge_counts.end(), 0); }
int TokenBatch::face_offset(int model) const {
  return std::accumulate(face_counts.begin(), face_counts.begin() + model, 0);
}
int TokenBatch::edge_offset(int model) const {
  return std::accumulate(edge_counts.begin(), edge_counts.begin() + model, 0);
}

TokenBatch tokenize_model(const BrepModel& model, const ModelPrimitives& prims, const PrimitiveCaps& caps) {
  try {
    check_primitives(model, prims);
  } catch (const IntegrityError& e) {
    throw IntegrityError(std::string("cannot tokenize: ") + e.what());
  }
  const PrimitiveSelection sel = select_primitives(prims, caps);
  TokenBatch b;
  b.face_cap = caps.face;
  b.edge_cap = caps.edge;
  b.triangle_degree = prims.options.triangle_degree;
  b.curve_degree = prims.options.curve_degree;
  b.face_counts = {model.face_count()};
  b.edge_counts = {model.edge_count()};
  const ModelFrame frame = model_frame(model);
  b.frames = {frame};
  b.warnings = sel.warnings;

  const auto nf = static_cast<std::size_t>(model.face_count());
  const auto ne = static_cast<std::size_t>(model.edge_count());
  const auto fcap = static_cast<std::size_t>(b.face_cap);
  const auto ecap = static_cast<std::size_t>(b.edge_cap);
  const auto ffeat = static_cast<std::size_t>(b.face_features());
  const auto efeat = static_cast<std::size_t>(b.edge_features());
  b.face_tensor.assign(nf * fcap * ffeat, 0.0);
  b.face_primitive_mask.assign(nf * fcap, 0);
  b.edge_tensor.assign(ne * ecap * efeat, 0.0);
  b.edge_primitive_mask.assign(ne * ecap, 0);

  for (std::size_t f = 0; f < nf; ++f) {
    std::size_t slot = f * fcap;
    for (std::size_t k : sel.faces[f]) {
      const auto& pts = prims.faces[f].triangles[k].control_points;
      for (std::size_t i = 0; i < pts.size(); ++i) put(b.face_tensor, slot * ffeat + 4 * i, pts[i], frame);
      b.face_primitive_mask[slot++] = 1;
    }
  }
  for (std::size_t e = 0; e < ne; ++e) {
    std::size_t slot = e * ecap;
    for (std::size_t k : sel.edges[e]) {
      const auto& pts = prims.edges[e].segments[k].control_points;
      for (std::size_t i = 0; i < pts.size(); ++i) put(b.edge_tensor, slot * efeat + 4 * i, pts[i], frame);
      b.edge_primitive_mask[slot++] = 1;
    }
  }
  append_triples(b.face_adjacency, build_face_graph(model).adjacency);
  append_triples(b.edge_adjacency, build_edge_graph(model).adjacency);
  return b;
}

TokenBatch concat_batches(std::span<const TokenBatch> batches) {
  if (batches.empty()) throw ArgumentError("no batches to concatenate");
  TokenBatch out;
  out.face_cap = batches[0].face_cap;
  out.edge_cap = batches[0].edge_cap;
  out.triangle_degree = batches[0].triangle_degree;
  out.curve_degree = batches[0].curve_degree;
  int foff = 0;
  int eoff = 0;
  for (const auto& b : batches) {
    if (b.face_cap != out.face_cap || b.edge_cap != out.edge_cap || b.triangle_degree != out.triangle_degree ||
        b.curve_degree != out.curve_degree) {
      throw IntegrityError("batches with different caps or degrees cannot be concatenated");
    }
    out.face_counts.insert(out.face_counts.end(), b.face_counts.begin(), b.face_counts.end());
    out.edge_counts.insert(out.edge_counts.end(), b.edge_counts.begin(), b.edge_counts.end());
    out.frames.insert(out.frames.end(), b.frames.begin(), b.frames.end());
    out.face_tensor.insert(out.face_tensor.end(), b.face_tensor.begin(), b.face_tensor.end());
    out.face_primitive_mask.insert(out.face_primitive_mask.end(), b.face_primitive_mask.begin(),
                                   b.face_primitive_mask.end());
    out.edge_tensor.insert(out.edge_tensor.end(), b.edge_tensor.begin(), b.edge_tensor.end());
    out.edge_primitive_mask.insert(out.edge_primitive_mask.end(), b.edge_primitive_mask.begin(),
                                   b.edge_primitive_mask.end());
    for (const auto& t : b.face_adjacency) out.face_adjacency.push_back({t.a + foff, t.b + foff, t.shared + eoff});
    for (const auto& t : b.edge_adjacency) out.edge_adjacency.push_back({t.a + eoff, t.b + eoff, t.shared + foff});
    out.warnings.insert(out.warnings.end(), b.warnings.begin(), b.warnings.end());
    foff += b.face_total();
    eoff += b.edge_total();
  }
  return out;
}

TokenBatch slice_batch(const TokenBatch& batch, int model) {
  if (model < 0 || model >= batch.model_count()) throw ArgumentError("model index out of range");
  const int f0 = batch.face_offset(model);
  const int e0 = batch.edge_offset(model);
  const int nf = batch.face_counts[static_cast<std::size_t>(model)];
  const int ne = batch.edge_counts[static_cast<std::size_t>(model)];
  TokenBatch out;
  out.face_cap = batch.face_cap;
  out.edge_cap = batch.edge_cap;
  out.triangle_degree = batch.triangle_degree;
  out.curve_degree = batch.curve_degree;
  out.face_counts = {nf};
  out.edge_counts = {ne};
  out.frames = {batch.frames[static_cast<std::size_t>(model)]};
  const auto fs = static_cast<std::size_t>(batch.face_cap);
  const auto es = static_cast<std::size_t>(batch.edge_cap);
  const auto ff = fs * static_cast<std::size_t>(batch.face_features());
  const auto ef = es * static_cast<std::size_t>(batch.edge_features());
  auto sub = [](const auto& v, std::size_t from, std::size_t count) {
    return std::decay_t<decltype(v)>(v.begin() + static_cast<std::ptrdiff_t>(from),
                                     v.begin() + static_cast<std::ptrdiff_t>(from + count));
  };
  out.face_tensor = sub(batch.face_tensor, static_cast<std::size_t>(f0) * ff, static_cast<std::size_t>(nf) * ff);
  out.face_primitive_mask =
      sub(batch.face_primitive_mask, static_cast<std::size_t>(f0) * fs, static_cast<std::size_t>(nf) * fs);
  out.edge_tensor = sub(batch.edge_tensor, static_cast<std::size_t>(e0) * ef, static_cast<std::size_t>(ne) * ef);
  out.edge_primitive_mask =
      sub(batch.edge_primitive_mask, static_cast<std::size_t>(e0) * es, static_cast<std::size_t>(ne) * es);
  for (const auto& t : batch.face_adjacency) {
    if (t.a >= f0 && t.a < f0 + nf) out.face_adjacency.push_back({t.a - f0, t.b - f0, t.shared - e0});
  }
  for (const auto& t : batch.edge_adjacency) {
    if (t.a >= e0 && t.a < e0 + ne) out.edge_adjacency.push_back({t.a - e0, t.b - e0, t.shared - f0});
  }
  return out;
}

void check_batch(const TokenBatch& b) {
  auto fail = [](const std::string& what) { throw IntegrityError("token batch: " + what); };
  if (b.face_cap < 1 || b.edge_cap < 1) fail("caps must be positive");
  if (b.triangle_degree < 1 || b.curve_degree < 1) fail("degrees must be positive");
  if (b.face_counts.size() != b.edge_counts.size() || b.frames.size() != b.face_counts.size()) {
    fail("per-model arrays disagree");
  }
  for (std::size_t i = 0; i < b.face_counts.size(); ++i) {
    if (b.face_counts[i] < 1 || b.edge_counts[i] < 1) fail("model " + std::to_string(i) + " has no entities");
  }
  const auto nf = static_cast<std::size_t>(b.face_total());
  const auto ne = static_cast<std::size_t>(b.edge_total());
  const auto fcap = static_cast<std::size_t>(b.face_cap);
  const auto ecap = static_cast<std::size_t>(b.edge_cap);
  if (b.face_tensor.size() != nf * fcap * static_cast<std::size_t>(b.face_features())) fail("face tensor size");
  if (b.edge_tensor.size() != ne * ecap * static_cast<std::size_t>(b.edge_features())) fail("edge tensor size");
  if (b.face_primitive_mask.size() != nf * fcap) fail("face mask size");
  if (b.edge_primitive_mask.size() != ne * ecap) fail("edge mask size");
  for (std::size_t f = 0; f < nf; ++f) {
    bool any = false;
    for (std::size_t s = 0; s < fcap; ++s) any = any || b.face_primitive_mask[f * fcap + s];
    if (!any) fail("face " + std::to_string(f) + " has no valid primitive");
  }
  for (std::size_t e = 0; e < ne; ++e) {
    bool any = false;
    for (std::size_t s = 0; s < ecap; ++s) any = any || b.edge_primitive_mask[e * ecap + s];
    if (!any) fail("edge " + std::to_string(e) + " has no valid primitive");
  }
  for (const auto& t : b.face_adjacency) {
    if (t.a < 0 || t.b <= t.a || static_cast<std::size_t>(t.b) >= nf || t.shared < 0 ||
        static_cast<std::size_t>(t.shared) >= ne) {
      fail("face adjacency index out of range");
    }
  }
  for (const auto& t : b.edge_adjacency) {
    if (t.a < 0 || t.b <= t.a || static_cast<std::size_t>(t.b) >= ne || t.shared < 0 ||
        static_cast<std::size_t>(t.shared) >= nf) {
      fail("edge adjacency index out of range");
    }
  }
}

BezierTriangle detokenize_triangle(const TokenBatch& b, int face, int slot) {
  if (face < 0 || face >= b.face_total() || slot < 0 || slot >= b.face_cap) {
    throw ArgumentError("triangle slot out of range");
  }
  const std::size_t s = static_cast<std::size_t>(face) * static_cast<std::size_t>(b.face_cap) + static_cast<std::size_t>(slot);
  if (!b.face_primitive_mask[s]) throw ArgumentError("triangle slot is padding");
  BezierTriangle t;
  t.degree = b.triangle_degree;
  for (int i = 0; i < b.triangle_points(); ++i) {
    t.control_points.push_back(take(b.face_tensor, s * static_cast<std::size_t>(b.face_features()) + 4 * static_cast<std::size_t>(i)));
  }
  t.source.entity = face;
  return t;
}

BezierSegment detokenize_segment(const TokenBatch& b, int edge, int slot) {
  if (edge < 0 || edge >= b.edge_total() || slot < 0 || slot >= b.edge_cap) {
    throw ArgumentError("segment slot out of range");
  }
  const std::size_t s = static_cast<std::size_t>(edge) * static_cast<std::size_t>(b.edge_cap) + static_cast<std::size_t>(slot);
  if (!b.edge_primitive_mask[s]) throw ArgumentError("segment slot is padding");
  BezierSegment seg;
  seg.degree = b.curve_degree;
  for (int i = 0; i < b.segment_points(); ++i) {
    seg.control_points.push_back(take(b.edge_tensor, s * static_cast<std::size_t>(b.edge_features()) + 4 * static_cast<std::size_t>(i)));
  }
  seg.source.entity = edge;
  return seg;
}

std::vector<std::uint8_t> write_batch_bytes(const TokenBatch& b) {
  check_batch(b);
  ByteWriter w;
  w.magic("B2T1");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(b.face_cap));
  w.u32(static_cast<std::uint32_t>(b.edge_cap));
  w.u32(static_cast<std::uint32_t>(b.triangle_degree));
  w.u32(static_cast<std::uint32_t>(b.curve_degree));
  w.u32(static_cast<std::uint32_t>(b.model_count()));
  for (int i = 0; i < b.model_count(); ++i) {
    const auto& fr = b.frames[static_cast<std::size_t>(i)];
    w.u64(static_cast<std::uint64_t>(b.face_counts[static_cast<std::size_t>(i)]));
    w.u64(static_cast<std::uint64_t>(b.edge_counts[static_cast<std::size_t>(i)]));
    w.f64(fr.center.x);
    w.f64(fr.center.y);
    w.f64(fr.center.z);
    w.f64(fr.scale);
  }
  for (double x : b.face_tensor) w.f64(x);
  for (auto m : b.face_primitive_mask) w.u8(m);
  for (double x : b.edge_tensor) w.f64(x);
  for (auto m : b.edge_primitive_mask) w.u8(m);
  for (const auto* adj : {&b.face_adjacency, &b.edge_adjacency}) {
    w.u64(adj->size());
    for (const auto& t : *adj) {
      w.u64(static_cast<std::uint64_t>(t.a));
      w.u64(static_cast<std::uint64_t>(t.b));
      w.u64(static_cast<std::uint64_t>(t.shared));
    }
  }
  w.u32(static_cast<std::uint32_t>(b.warnings.size()));
  for (const auto& s : b.warnings) w.str(s);
  return w.bytes();
}

TokenBatch read_batch_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("B2T1");
  if (r.u32() != kVersion) throw ParseError("unsupported token file version");
  TokenBatch b;
  b.face_cap = static_cast<int>(r.u32());
  b.edge_cap = static_cast<int>(r.u32());
  b.triangle_degree = static_cast<int>(r.u32());
  b.curve_degree = static_cast<int>(r.u32());
  const std::uint32_t models = r.u32();
  if (b.face_cap < 1 || b.edge_cap < 1 || b.face_cap > 4096 || b.edge_cap > 4096 || b.triangle_degree < 1 ||
      b.triangle_degree > 30 || b.curve_degree < 1 || b.curve_degree > 30 || models > (1u << 20)) {
    throw ParseError("token file header out of range");
  }
  for (std::uint32_t i = 0; i < models; ++i) {
    const std::uint64_t nf = r.u64();
    const std::uint64_t ne = r.u64();
    if (nf > (1u << 24) || ne > (1u << 24)) throw ParseError("token file entity count out of range");
    b.face_counts.push_back(static_cast<int>(nf));
    b.edge_counts.push_back(static_cast<int>(ne));
    ModelFrame fr;
    fr.center.x = r.f64();
    fr.center.y = r.f64();
    fr.center.z = r.f64();
    fr.scale = r.f64();
    b.frames.push_back(fr);
  }
  const auto nf = static_cast<std::size_t>(b.face_total());
  const auto ne = static_cast<std::size_t>(b.edge_total());
  const std::size_t fslots = nf * static_cast<std::size_t>(b.face_cap);
  const std::size_t eslots = ne * static_cast<std::size_t>(b.edge_cap);
  const std::size_t need = fslots * (8 * static_cast<std::size_t>(b.face_features()) + 1) +
                           eslots * (8 * static_cast<std::size_t>(b.edge_features()) + 1);
  if (r.remaining() < need) throw ParseError("token file is truncated");
  b.face_tensor.resize(fslots * static_cast<std::size_t>(b.face_features()));
  for (double& x : b.face_tensor) x = r.f64();
  b.face_primitive_mask.resize(fslots);
  for (auto& m : b.face_primitive_mask) m = r.u8();
  b.edge_tensor.resize(eslots * static_cast<std::size_t>(b.edge_features()));
  for (double& x : b.edge_tensor) x = r.f64();
  b.edge_primitive_mask.resize(eslots);
  for (auto& m : b.edge_primitive_mask) m = r.u8();
  for (auto* adj : {&b.face_adjacency, &b.edge_adjacency}) {
    const std::uint64_t n = r.u64();
    if (n > r.remaining() / 24) throw ParseError("token file adjacency count out of range");
    for (std::uint64_t i = 0; i < n; ++i) {
      AdjacencyTriple t;
      t.a = static_cast<int>(r.u64());
      t.b = static_cast<int>(r.u64());
      t.shared = static_cast<int>(r.u64());
      adj->push_back(t);
    }
  }
  const std::uint32_t nw = r.u32();
  for (std::uint32_t i = 0; i < nw; ++i) b.warnings.push_back(r.str());
  if (!r.done()) throw ParseError("token file has trailing bytes");
  check_batch(b);
  return b;
}

void write_batch(const TokenBatch& batch, const std::filesystem::path& path) {
  atomic_write(path, write_batch_bytes(batch));
}

TokenBatch read_batch(const std::filesystem::path& path) { return read_batch_bytes(read_bytes(path)); }

}  // namespace b2s
