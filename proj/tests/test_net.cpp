#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "b2s/errors.hpp"
#include "b2s/nn/train.hpp"

using namespace b2s;
using namespace b2s::nn;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.width = 16;
  c.tokenizer_layers = 2;
  c.tokenizer_heads = 2;
  c.dual_layers = 2;
  c.dual_heads = 4;
  c.ff_mult = 2;
  return c;
}

// Random non-zero values everywhere, so every path carries signal.
Parameters jittered(const ModelConfig& c, std::uint64_t seed, double amount = 0.2) {
  Parameters p = init_parameters(c, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-amount, amount);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (double& x : p.value(i).data) x += u(rng);
  }
  return p;
}

Matrix random_matrix(int r, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (double& x : m.data) x = u(rng);
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(a.cols, b.cols);
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data[i] - b.data[i]));
  return d;
}

Sample cylinder_sample(const ModelConfig& c) {
  SolidParams sp;
  sp.jitter = 0.2;
  return prepare_sample(generate_solid(SolidKind::kCylinder, sp, 4), c);
}

struct Outputs {
  Matrix face0, edge0, face, edge, face_pred, edge_pred;
};

Outputs run(const Parameters& params, const TokenBatch& batch, const ModelConfig& c) {
  Tape t;
  const Bound p(t, params);
  const Forward f = forward(p, batch, c);
  Outputs o;
  o.face0 = t.value(f.face_tokens0);
  o.face = t.value(f.face_tokens);
  o.face_pred = t.value(f.face_pred);
  if (f.edge_tokens.valid()) {
    o.edge0 = t.value(f.edge_tokens0);
    o.edge = t.value(f.edge_tokens);
    o.edge_pred = t.value(f.edge_pred);
  }
  return o;
}

// Relabels entity i as perm[i].
TokenBatch permute(const TokenBatch& b, const std::vector<int>& pf, const std::vector<int>& pe) {
  TokenBatch out = b;
  const std::size_t ff = static_cast<std::size_t>(b.face_cap * b.face_features());
  const std::size_t ef = static_cast<std::size_t>(b.edge_cap * b.edge_features());
  for (std::size_t i = 0; i < pf.size(); ++i) {
    const std::size_t j = static_cast<std::size_t>(pf[i]);
    std::copy_n(b.face_tensor.begin() + static_cast<long>(i * ff), ff, out.face_tensor.begin() + static_cast<long>(j * ff));
    std::copy_n(b.face_primitive_mask.begin() + static_cast<long>(i) * b.face_cap, b.face_cap,
                out.face_primitive_mask.begin() + static_cast<long>(j) * b.face_cap);
  }
  for (std::size_t i = 0; i < pe.size(); ++i) {
    const std::size_t j = static_cast<std::size_t>(pe[i]);
    std::copy_n(b.edge_tensor.begin() + static_cast<long>(i * ef), ef, out.edge_tensor.begin() + static_cast<long>(j * ef));
    std::copy_n(b.edge_primitive_mask.begin() + static_cast<long>(i) * b.edge_cap, b.edge_cap,
                out.edge_primitive_mask.begin() + static_cast<long>(j) * b.edge_cap);
  }
  auto remap = [](std::vector<AdjacencyTriple>& triples, const std::vector<int>& own, const std::vector<int>& other) {
    for (auto& t : triples) {
      const int a = own[static_cast<std::size_t>(t.a)];
      const int b = own[static_cast<std::size_t>(t.b)];
      t = {std::min(a, b), std::max(a, b), other[static_cast<std::size_t>(t.shared)]};
    }
    std::sort(triples.begin(), triples.end(), [](const AdjacencyTriple& x, const AdjacencyTriple& y) {
      return std::tie(x.a, x.b, x.shared) < std::tie(y.a, y.b, y.shared);
    });
  };
  remap(out.face_adjacency, pf, pe);
  remap(out.edge_adjacency, pe, pf);
  return out;
}

Matrix permute_rows(const Matrix& m, const std::vector<int>& perm) {
  Matrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) std::copy_n(m.row(i), m.cols, out.row(perm[static_cast<std::size_t>(i)]));
  return out;
}

}  // namespace

TEST(Tape, NonFiniteValueNamesTensor) {
  Tape t;
  const Var a = t.leaf(Matrix(1, 2, 1e308), true, "a");
  const Var b = t.leaf(Matrix(1, 2, 1e308), true, "b");
  try {
    t.add(a, b, "sum.of.inputs");
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("sum.of.inputs"), std::string::npos);
  }
  EXPECT_THROW(t.leaf(Matrix(1, 1, std::numeric_limits<double>::quiet_NaN()), true, "nan"), NumericError);
}

TEST(Tape, TopologyBiasMatchesDenseOracle) {
  // Faces 0 and 1 share edges 0 and 1; faces 1 and 2 share edge 2.
  std::mt19937_64 rng(3);
  const int n = 4, c = 8, heads = 2;
  const std::vector<AdjacencyTriple> adj{{0, 1, 0}, {0, 1, 1}, {1, 2, 2}};
  const std::vector<int> counts{n};
  const AttentionLayout layout = stream_layout(counts, &adj);
  const Matrix q = random_matrix(n, c, rng), k = random_matrix(n, c, rng), v = random_matrix(n, c, rng);
  const Matrix bias = random_matrix(3, heads, rng);

  Tape t;
  const Var out = t.attention(t.constant(q), t.constant(k), t.constant(v), heads, layout, t.constant(bias));

  const int dh = c / heads;
  Matrix expect(n, c);
  for (int h = 0; h < heads; ++h) {
    std::vector<std::vector<double>> beta(n, std::vector<double>(n, 0.0));
    for (const auto& tr : adj) {
      beta[tr.a][tr.b] += bias(tr.shared, h);
      beta[tr.b][tr.a] += bias(tr.shared, h);
    }
    for (int i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -1e300;
      for (int j = 0; j < n; ++j) {
        double dot = 0.0;
        for (int d = 0; d < dh; ++d) dot += q(i, h * dh + d) * k(j, h * dh + d);
        s[j] = dot / std::sqrt(dh) + beta[i][j];
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (double& x : s) z += (x = std::exp(x - mx));
      for (int j = 0; j < n; ++j) {
        for (int d = 0; d < dh; ++d) expect(i, h * dh + d) += s[j] / z * v(j, h * dh + d);
      }
    }
  }
  EXPECT_LT(max_abs_diff(t.value(out), expect), 1e-14);
  // Pair (0, 1) gains the sum of both shared-edge rows.
  ASSERT_EQ(layout.bias[0].size(), 2u);
  EXPECT_EQ(layout.bias[0][0].second, 0);
  EXPECT_EQ(layout.bias[0][1].second, 1);
}

TEST(Loss, HandComputedSinglePoint) {
  Tape t;
  Matrix pred(1, 6), target(1, 6);
  pred(0, 0) = 0.1;
  pred(0, 3) = 5.0;  // padded slot
  const Var l = t.masked_mse(t.leaf(pred, true, "pred"), target, {1, 0});
  EXPECT_DOUBLE_EQ(t.value(l).data[0], 0.1 * 0.1);
  Matrix same = target;
  Tape t2;
  EXPECT_EQ(t2.value(t2.masked_mse(t2.constant(same), target, {1, 1})).data[0], 0.0);
}

TEST(Loss, EntitiesWithoutValidPointsAreExcluded) {
  Tape t;
  Matrix pred(2, 3), target(2, 3);
  pred(0, 1) = 0.5;
  pred(1, 1) = 9.0;
  const Var l = t.masked_mse(t.leaf(pred, true, "pred"), target, {1, 0});
  EXPECT_DOUBLE_EQ(t.value(l).data[0], 0.25);
}

TEST(Loss, IdentityAndPaddingOnRealModel) {
  const ModelConfig c = small_config();
  const Sample s = cylinder_sample(c);
  const Parameters params = jittered(c, 2);
  const LossValues l = evaluate_loss(params, s.batch, std::span<const ShapeTargets>(&s.targets, 1), c);
  EXPECT_EQ(l.total, l.face + l.edge);
  EXPECT_GT(l.face, 0.0);
  EXPECT_GT(l.edge, 0.0);

  // Garbage in padded target slots changes nothing.
  Sample noisy = s;
  for (std::size_t i = 0; i < noisy.targets.face_mask.size(); ++i) {
    if (!noisy.targets.face_mask[i]) noisy.targets.face_points[3 * i] = 1e6;
  }
  for (std::size_t i = 0; i < noisy.targets.edge_mask.size(); ++i) {
    if (!noisy.targets.edge_mask[i]) noisy.targets.edge_points[3 * i + 2] = -1e6;
  }
  const LossValues ln = evaluate_loss(params, noisy.batch, std::span<const ShapeTargets>(&noisy.targets, 1), c);
  EXPECT_EQ(ln.total, l.total);
}

TEST(Embed, ZeroWeightsGiveBiasAndMaskedSlotsAreZero) {
  const ModelConfig c = small_config();
  const Sample s = cylinder_sample(c);
  Parameters params = jittered(c, 1);
  for (const char* n : {"embed.face.fc1.w", "embed.face.fc2.w"}) {
    for (double& x : params.at(n).data) x = 0.0;
  }
  Tape t;
  const Bound p(t, params);
  const Matrix& e = t.value(embed_primitives(p, s.batch, true, c));
  const Matrix& b = params.at("embed.face.fc2.b");
  ASSERT_EQ(e.rows, s.batch.face_total() * c.face_cap);
  ASSERT_EQ(e.cols, c.width);
  for (int r = 0; r < e.rows; ++r) {
    const bool valid = s.batch.face_primitive_mask[static_cast<std::size_t>(r)] != 0;
    for (int j = 0; j < e.cols; ++j) EXPECT_EQ(e(r, j), valid ? b.data[static_cast<std::size_t>(j)] : 0.0);
  }
}

TEST(Encoder, PrimitivePermutationInvariance) {
  const ModelConfig c = small_config();
  const Sample s = cylinder_sample(c);
  const Parameters params = jittered(c, 5);
  TokenBatch b = s.batch;
  // Reverse the slots of face 0.
  const int cap = b.face_cap, ff = b.face_features();
  for (int k = 0; k < cap / 2; ++k) {
    const int o = cap - 1 - k;
    std::swap_ranges(b.face_tensor.begin() + k * ff, b.face_tensor.begin() + (k + 1) * ff, b.face_tensor.begin() + o * ff);
    std::swap(b.face_primitive_mask[static_cast<std::size_t>(k)], b.face_primitive_mask[static_cast<std::size_t>(o)]);
  }
  EXPECT_LT(max_abs_diff(run(params, s.batch, c).face0, run(params, b, c).face0), 1e-12);
}

TEST(Dual, PaddingInvariance) {
  ModelConfig small = small_config();
  small.face_cap = 96;
  small.edge_cap = 4;
  ModelConfig big = small;
  big.face_cap = 120;
  big.edge_cap = 9;
  SolidParams sp;
  const BrepModel model = generate_solid(SolidKind::kCylinder, sp, 0);
  const Sample a = prepare_sample(model, small);
  const Sample b = prepare_sample(model, big);

  const Parameters pa = jittered(small, 8);
  Parameters pb;
  const Parameters fresh = init_parameters(big, 8);
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    const std::string& n = fresh.name(i);
    Matrix m = fresh.value(i);
    const Matrix& src = pa.at(n);
    for (int r = 0; r < src.rows; ++r) std::copy_n(src.row(r), src.cols, m.row(r));
    pb.add(n, m);
  }
  const Outputs oa = run(pa, a.batch, small);
  const Outputs ob = run(pb, b.batch, big);
  EXPECT_LT(max_abs_diff(oa.face0, ob.face0), 1e-12);
  EXPECT_LT(max_abs_diff(oa.edge0, ob.edge0), 1e-12);
  EXPECT_LT(max_abs_diff(oa.face, ob.face), 1e-10);
  EXPECT_LT(max_abs_diff(oa.edge, ob.edge), 1e-10);
  double d = 0.0;
  for (int r = 0; r < oa.face_pred.rows; ++r) {
    for (int j = 0; j < oa.face_pred.cols; ++j) d = std::max(d, std::abs(oa.face_pred(r, j) - ob.face_pred(r, j)));
  }
  EXPECT_LT(d, 1e-10);
}

TEST(Dual, PermutationEquivariance) {
  for (StreamMode mode : {StreamMode::kDual, StreamMode::kFaceOnly, StreamMode::kMerged}) {
    ModelConfig c = small_config();
    c.streams = mode;
    if (mode != StreamMode::kDual) c.attention_mode = AttentionMode::kStandard;
    SolidParams sp;
    const Sample s = prepare_sample(generate_solid(SolidKind::kTrimmedPlate, sp, 2), c);
    const Parameters params = jittered(c, 9);
    std::vector<int> pf(static_cast<std::size_t>(s.batch.face_total())), pe(static_cast<std::size_t>(s.batch.edge_total()));
    std::iota(pf.begin(), pf.end(), 0);
    std::iota(pe.begin(), pe.end(), 0);
    std::mt19937_64 rng(4);
    std::shuffle(pf.begin(), pf.end(), rng);
    std::shuffle(pe.begin(), pe.end(), rng);
    const Outputs o = run(params, s.batch, c);
    const Outputs op = run(params, permute(s.batch, pf, pe), c);
    EXPECT_LT(max_abs_diff(permute_rows(o.face, pf), op.face), 1e-10) << stream_mode_name(mode);
    EXPECT_LT(max_abs_diff(permute_rows(o.face_pred, pf), op.face_pred), 1e-10);
    if (mode != StreamMode::kFaceOnly) EXPECT_LT(max_abs_diff(permute_rows(o.edge, pe), op.edge), 1e-10);
  }
}

TEST(Dual, ZeroBiasProjectionEqualsStandardAttention) {
  ModelConfig topo = small_config();
  ModelConfig standard = topo;
  standard.attention_mode = AttentionMode::kStandard;
  const Sample s = cylinder_sample(topo);
  Parameters pt = jittered(topo, 6);
  Parameters ps;
  for (std::size_t i = 0; i < pt.size(); ++i) {
    if (pt.name(i).find(".topo.") != std::string::npos) {
      for (double& x : pt.value(i).data) x = 0.0;
    } else {
      ps.add(pt.name(i), pt.value(i));
    }
  }
  ASSERT_EQ(init_parameters(standard, 0).size(), ps.size());
  const Outputs a = run(pt, s.batch, topo);
  const Outputs b = run(ps, s.batch, standard);
  EXPECT_LT(max_abs_diff(a.face, b.face), 1e-13);
  EXPECT_LT(max_abs_diff(a.edge, b.edge), 1e-13);
  // Non-zero projections do change the result.
  const Outputs c = run(jittered(topo, 6), s.batch, topo);
  EXPECT_GT(max_abs_diff(a.face, c.face), 1e-6);
}

TEST(Dual, ZeroLayersAndZeroDualWeightsAreIdentity) {
  ModelConfig c = small_config();
  const Sample s = cylinder_sample(c);
  Parameters params = jittered(c, 3);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.name(i).rfind("dual.", 0) == 0) {
      for (double& x : params.value(i).data) x = 0.0;
    }
  }
  const Outputs o = run(params, s.batch, c);
  EXPECT_EQ(o.face, o.face0);
  EXPECT_EQ(o.edge, o.edge0);

  c.dual_layers = 0;
  const Parameters p0 = jittered(c, 3);
  const Outputs z = run(p0, s.batch, c);
  EXPECT_EQ(z.face, z.face0);
  EXPECT_EQ(z.edge, z.edge0);
  EXPECT_EQ(z.face.rows, s.batch.face_total());
  EXPECT_EQ(z.edge.rows, s.batch.edge_total());
  EXPECT_EQ(z.face.cols, c.width);
}

TEST(Grad, FiniteDifferenceAgreement) {
  const GradcheckResult r = gradcheck(1);
  EXPECT_EQ(r.checked, 50);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_TRUE(r.passed);
}

TEST(Grad, EdgeSupervisionOffZeroesEdgeHead) {
  ModelConfig c = small_config();
  c.edge_supervision = false;
  const Sample s = cylinder_sample(c);
  const Parameters params = jittered(c, 4);
  const Gradients g = compute_gradients(params, s.batch, std::span<const ShapeTargets>(&s.targets, 1), c);
  EXPECT_EQ(g.loss.edge, 0.0);
  EXPECT_EQ(g.loss.total, g.loss.face);
  for (const char* n : {"head.edge.w", "head.edge.b"}) {
    for (double x : g.grads[params.index_of(n)].data) EXPECT_EQ(x, 0.0);
  }
  double other = 0.0;
  for (double x : g.grads[params.index_of("dual.edge.layer0.ff1.w")].data) other += std::abs(x);
  EXPECT_GT(other, 0.0);
}

TEST(Grad, LossScaleDoublesGradientsAndIsDeterministic) {
  const ModelConfig c = small_config();
  const Sample s = cylinder_sample(c);
  const Parameters params = jittered(c, 4);
  const std::span<const ShapeTargets> tg(&s.targets, 1);
  const Gradients g1 = compute_gradients(params, s.batch, tg, c);
  const Gradients g1b = compute_gradients(params, s.batch, tg, c);
  const Gradients g2 = compute_gradients(params, s.batch, tg, c, 2.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(g1.grads[i], g1b.grads[i]);
    for (std::size_t k = 0; k < g1.grads[i].size(); ++k) EXPECT_EQ(g2.grads[i].data[k], 2.0 * g1.grads[i].data[k]);
  }
}

TEST(Train, DeterministicTraceAndCheckpointRoundTrip) {
  const ModelConfig c = toy_config();
  const Sample s = prepare_sample(make_toy_model(), c);
  const std::vector<Sample> data{s, s};
  TrainOptions o;
  o.optimizer.lr = 1e-3;
  o.steps = 10;
  o.seed = 12;
  const TrainResult a = train(data, c, o, init_parameters(c, 1));
  const TrainResult b = train(data, c, o, init_parameters(c, 1));
  EXPECT_EQ(loss_trace_csv(a.trace), loss_trace_csv(b.trace));
  EXPECT_EQ(a.params, b.params);

  const Checkpoint ck{c, a.params};
  const auto bytes = write_checkpoint_bytes(ck);
  EXPECT_EQ(read_checkpoint_bytes(bytes), ck);
  auto bad = bytes;
  bad.pop_back();
  EXPECT_THROW(read_checkpoint_bytes(bad), ParseError);
}

TEST(Train, ZeroLearningRateFreezesParameters) {
  const ModelConfig c = toy_config();
  const std::vector<Sample> data{prepare_sample(make_toy_model(), c)};
  for (double decay : {0.0, 0.01}) {
    TrainOptions o;
    o.optimizer.lr = 0.0;
    o.optimizer.weight_decay = decay;
    o.steps = 5;
    const Parameters init = init_parameters(c, 2);
    EXPECT_EQ(train(data, c, o, init).params, init);
  }
}

TEST(Train, CosineSchedule) {
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0, 100), 1e-3);
  EXPECT_NEAR(cosine_lr(1e-3, 50, 100), 5e-4, 1e-18);
  EXPECT_NEAR(cosine_lr(1e-3, 100, 100), 0.0, 1e-18);
}

TEST(Train, OverfitsOneSample) {
  ModelConfig c = small_config();
  c.width = 32;
  const std::vector<Sample> data{cylinder_sample(c)};
  TrainOptions o;
  o.optimizer.lr = 1e-3;
  o.steps = 200;
  const Parameters init = init_parameters(c, 3);
  const double before = dataset_loss(init, data, c).total;
  const double after = dataset_loss(train(data, c, o, init).params, data, c).total;
  EXPECT_LT(after, 0.5 * before);
}

TEST(Finetune, LinearProbeLeavesBackboneUnchanged) {
  const ModelConfig c = toy_config();
  const Sample s = prepare_sample(make_toy_model(), c);
  const std::vector<LabeledModel> data{{s.batch, {1, 0}}};
  const Parameters pre = init_parameters(c, 3);
  FinetuneOptions o;
  o.task = Task::kSegment;
  o.strategy = Strategy::kLinear;
  o.steps = 5;
  const FinetuneResult r = finetune_head(pre, data, c, o);
  for (std::size_t i = 0; i < pre.size(); ++i) EXPECT_EQ(r.params.at(pre.name(i)), pre.value(i)) << pre.name(i);
  EXPECT_TRUE(r.params.contains("task.w"));

  o.strategy = Strategy::kPartial;
  const FinetuneResult rp = finetune_head(pre, data, c, o);
  EXPECT_EQ(rp.params.at("tok.face.agg"), pre.at("tok.face.agg"));
  EXPECT_NE(rp.params.at("dual.face.layer0.ff1.w"), pre.at("dual.face.layer0.ff1.w"));

  const std::vector<LabeledModel> bad{{s.batch, {1}}};
  EXPECT_THROW(finetune_head(pre, bad, c, o), IntegrityError);
}

TEST(Config, JsonRoundTripAndValidation) {
  ModelConfig c = small_config();
  c.streams = StreamMode::kMerged;
  c.attention_mode = AttentionMode::kStandard;
  c.edge_supervision = false;
  EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
  EXPECT_THROW(ModelConfig::from_json(R"({"width": 10, "dual_heads": 4})"), ConfigError);
  EXPECT_THROW(ModelConfig::from_json(R"({"widht": 16})"), ConfigError);
  EXPECT_THROW(ModelConfig::from_json(R"({"streams": "face_only"})"), ConfigError);
  EXPECT_THROW(ModelConfig::from_json("{"), ParseError);
}
