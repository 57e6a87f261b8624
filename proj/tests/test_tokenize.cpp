#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "b2s/brep.hpp"
#include "b2s/errors.hpp"
#include "b2s/primitives.hpp"
#include "b2s/tokenize.hpp"

using namespace b2s;

TEST(Tokenize, BoxFacePadding) {
  const BrepModel box = generate_solid(SolidKind::kBox, {});
  const TokenBatch b = tokenize_model(box, decompose_model(box), {.face = 16, .edge = 8});
  ASSERT_EQ(b.face_total(), 6);
  for (int f = 0; f < 6; ++f) {
    int valid = 0;
    for (int s = 0; s < 16; ++s) valid += b.face_primitive_mask[static_cast<std::size_t>(f * 16 + s)];
    EXPECT_EQ(valid, 2);
  }
  EXPECT_EQ(b.face_features(), 28 * 4);
  EXPECT_TRUE(b.warnings.empty());
}

TEST(Tokenize, CircleEdgeSlots) {
  const BrepModel cyl = generate_solid(SolidKind::kCylinder, {});
  const auto prims = decompose_model(cyl);
  const TokenBatch b = tokenize_model(cyl, prims);
  int valid = 0;
  for (int s = 0; s < 8; ++s) valid += b.edge_primitive_mask[static_cast<std::size_t>(s)];
  EXPECT_EQ(valid, static_cast<int>(cyl.edges()[0].curve.knots().interior_knots().size()) + 1);
  EXPECT_EQ(valid, 4);
  EXPECT_EQ(b.edge_features(), 16);
}

TEST(Tokenize, PaddedSlotsZero) {
  const BrepModel m = generate_solid(SolidKind::kLoftedWedge, {});
  const TokenBatch b = tokenize_model(m, decompose_model(m));
  const auto ff = static_cast<std::size_t>(b.face_features());
  for (std::size_t s = 0; s < b.face_primitive_mask.size(); ++s) {
    if (b.face_primitive_mask[s]) continue;
    for (std::size_t k = 0; k < ff; ++k) EXPECT_EQ(b.face_tensor[s * ff + k], 0.0);
  }
}

TEST(Tokenize, DetokenizeRoundTrip) {
  const BrepModel m = generate_solid(SolidKind::kTrimmedPlate, {.random_pose = true}, 2);
  const auto prims = decompose_model(m);
  const TokenBatch b = tokenize_model(m, prims, {.face = 1000, .edge = 100});
  const ModelFrame fr = model_frame(m);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0, 1);
  for (int f = 0; f < b.face_total(); ++f) {
    const auto& tris = prims.faces[static_cast<std::size_t>(f)].triangles;
    for (std::size_t k = 0; k < tris.size(); ++k) {
      const BezierTriangle t = detokenize_triangle(b, f, static_cast<int>(k));
      for (std::size_t i = 0; i < t.control_points.size(); ++i) {
        EXPECT_EQ(t.control_points[i].w, tris[k].control_points[i].w);
        EXPECT_LT(norm(t.control_points[i].euclidean() - fr.apply(tris[k].control_points[i].euclidean())), 1e-14);
      }
      double u = U(rng), v = U(rng);
      if (u + v > 1) u = 1 - u, v = 1 - v;
      EXPECT_LT(norm(eval_bezier_triangle(t, u, v) - fr.apply(eval_bezier_triangle(tris[k], u, v))), 1e-13);
    }
  }
  for (int e = 0; e < b.edge_total(); ++e) {
    const auto& segs = prims.edges[static_cast<std::size_t>(e)].segments;
    for (std::size_t k = 0; k < segs.size(); ++k) {
      const BezierSegment s = detokenize_segment(b, e, static_cast<int>(k));
      const double t = U(rng);
      EXPECT_LT(norm(eval_bezier_segment(s, t) - fr.apply(eval_bezier_segment(segs[k], t))), 1e-13);
    }
  }
}

TEST(Tokenize, CapSubsamplingAndWarning) {
  const BrepModel m = generate_solid(SolidKind::kTrimmedPlate, {});
  const auto prims = decompose_model(m);
  const TokenBatch b = tokenize_model(m, prims, {.face = 4, .edge = 2});
  EXPECT_FALSE(b.warnings.empty());
  // Kept slots are the 4 largest triangles by corner area, ascending index.
  const auto& tris = prims.faces[4].triangles;
  std::vector<std::size_t> idx(tris.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto c) { return triangle_area(tris[a]) > triangle_area(tris[c]); });
  idx.resize(4);
  std::sort(idx.begin(), idx.end());
  const ModelFrame fr = model_frame(m);
  for (int s = 0; s < 4; ++s) {
    const BezierTriangle t = detokenize_triangle(b, 4, s);
    EXPECT_LT(norm(t.control_points[0].euclidean() - fr.apply(tris[idx[static_cast<std::size_t>(s)]].control_points[0].euclidean())),
              1e-14);
  }
}

TEST(Tokenize, CapMonotonicity) {
  const BrepModel m = generate_solid(SolidKind::kCylinder, {});
  const auto prims = decompose_model(m);
  std::size_t most = 0;
  for (const auto& f : prims.faces) most = std::max(most, f.triangles.size());
  const int cap = static_cast<int>(most);
  const TokenBatch small = tokenize_model(m, prims, {.face = cap, .edge = 4});
  const TokenBatch big = tokenize_model(m, prims, {.face = cap + 5, .edge = 6});
  EXPECT_TRUE(small.warnings.empty());
  for (int f = 0; f < small.face_total(); ++f) {
    for (int s = 0; s < cap; ++s) {
      const auto a = static_cast<std::size_t>(f * cap + s), c = static_cast<std::size_t>(f * (cap + 5) + s);
      ASSERT_EQ(small.face_primitive_mask[a], big.face_primitive_mask[c]);
      if (!small.face_primitive_mask[a]) continue;
      EXPECT_EQ(detokenize_triangle(small, f, s), detokenize_triangle(big, f, s));
    }
  }
}

TEST(Tokenize, UnstandardizedRejected) {
  const BrepModel box = generate_solid(SolidKind::kBox, {});
  auto prims = decompose_model(box);
  prims.faces[2].triangles[0] = elevate_triangle_degree(prims.faces[2].triangles[0], 7);
  EXPECT_THROW(tokenize_model(box, prims), IntegrityError);
}

TEST(Tokenize, MultiModelIsolation) {
  const BrepModel a = generate_solid(SolidKind::kBox, {});
  const BrepModel c = generate_solid(SolidKind::kCylinder, {});
  const std::vector<TokenBatch> parts{tokenize_model(a, decompose_model(a)), tokenize_model(c, decompose_model(c))};
  const TokenBatch b = concat_batches(parts);
  EXPECT_EQ(b.face_counts, (std::vector<int>{6, 3}));
  EXPECT_EQ(b.edge_counts, (std::vector<int>{12, 3}));
  for (const auto& t : b.face_adjacency) EXPECT_EQ(t.a < 6, t.b < 6);
  for (const auto& t : b.edge_adjacency) EXPECT_EQ(t.a < 12, t.b < 12);
  for (int i = 0; i < 2; ++i) {
    TokenBatch s = slice_batch(b, i);
    s.warnings = parts[static_cast<std::size_t>(i)].warnings;
    EXPECT_EQ(s, parts[static_cast<std::size_t>(i)]);
  }
}

TEST(Tokenize, PermutationContract) {
  const BrepModel m = generate_solid(SolidKind::kLoftedWedge, {});
  std::vector<int> perm(static_cast<std::size_t>(m.face_count()));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(5);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Face> faces(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) faces[static_cast<std::size_t>(perm[i])] = {perm[i], m.faces()[i].surface};
  std::vector<Edge> edges = m.edges();
  for (auto& e : edges) {
    for (int& f : e.bounds_faces) f = perm[static_cast<std::size_t>(f)];
  }
  const BrepModel pm(faces, edges);
  const TokenBatch a = tokenize_model(m, decompose_model(m));
  const TokenBatch b = tokenize_model(pm, decompose_model(pm));
  const auto row = static_cast<std::size_t>(a.face_cap * a.face_features());
  for (std::size_t f = 0; f < perm.size(); ++f) {
    const auto g = static_cast<std::size_t>(perm[f]);
    EXPECT_TRUE(std::equal(a.face_tensor.begin() + static_cast<std::ptrdiff_t>(f * row),
                           a.face_tensor.begin() + static_cast<std::ptrdiff_t>((f + 1) * row),
                           b.face_tensor.begin() + static_cast<std::ptrdiff_t>(g * row)));
  }
  std::vector<AdjacencyTriple> mapped;
  for (const auto& t : a.face_adjacency) {
    const int x = perm[static_cast<std::size_t>(t.a)], y = perm[static_cast<std::size_t>(t.b)];
    mapped.push_back({std::min(x, y), std::max(x, y), t.shared});
  }
  auto key = [](const AdjacencyTriple& t) { return std::tuple(t.a, t.b, t.shared); };
  auto sorted = [&](std::vector<AdjacencyTriple> v) {
    std::sort(v.begin(), v.end(), [&](auto& p, auto& q) { return key(p) < key(q); });
    return v;
  };
  EXPECT_EQ(sorted(mapped), sorted(b.face_adjacency));
  std::vector<AdjacencyTriple> emapped;
  for (const auto& t : a.edge_adjacency) emapped.push_back({t.a, t.b, perm[static_cast<std::size_t>(t.shared)]});
  EXPECT_EQ(sorted(emapped), sorted(b.edge_adjacency));
}

TEST(Tokenize, BinaryRoundTrip) {
  const BrepModel a = generate_solid(SolidKind::kTrimmedPlate, {});
  const BrepModel c = generate_solid(SolidKind::kCylinder, {});
  const std::vector<TokenBatch> parts{tokenize_model(a, decompose_model(a), {.face = 4, .edge = 2}),
                                      tokenize_model(c, decompose_model(c), {.face = 4, .edge = 2})};
  const TokenBatch b = concat_batches(parts);
  const auto bytes = write_batch_bytes(b);
  EXPECT_EQ(read_batch_bytes(bytes), b);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
  EXPECT_THROW(read_batch_bytes(cut), ParseError);
}
