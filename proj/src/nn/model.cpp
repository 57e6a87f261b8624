#include "b2s/nn/model.hpp"

#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

#include "b2s/errors.hpp"

namespace b2s::nn {

using nlohmann::json;

namespace {

constexpr double kInitStd = 0.02;

std::string layer_prefix(const std::string& stream, int l) { return stream + ".layer" + std::to_string(l); }

class Initializer {
 public:
  Initializer(Parameters& params, std::uint64_t seed) : params_(params), rng_(seed) {}

  void weight(const std::string& name, int rows, int cols) {
    Matrix m(rows, cols);
    std::normal_distribution<double> normal(0.0, kInitStd);
    for (double& x : m.data) {
      do {
        x = normal(rng_);
      } while (std::abs(x) > 2.0 * kInitStd);
    }
    params_.add(name, std::move(m));
  }
  void fill(const std::string& name, int rows, int cols, double v) { params_.add(name, Matrix(rows, cols, v)); }

  void linear(const std::string& name, int in, int out) {
    weight(name + ".w", in, out);
    fill(name + ".b", 1, out, 0.0);
  }
  void layer_norm(const std::string& name, int width) {
    fill(name + ".g", 1, width, 1.0);
    fill(name + ".b", 1, width, 0.0);
  }
  void block(const std::string& prefix, const ModelConfig& c, int heads, bool topology) {
    const int w = c.width;
    layer_norm(prefix + ".ln1", w);
    for (const char* t : {".q", ".k", ".v", ".o"}) linear(prefix + ".attn" + t, w, w);
    if (topology) {
      fill(prefix + ".topo.w", w, heads, 0.0);
      fill(prefix + ".topo.b", 1, heads, 0.0);
    }
    layer_norm(prefix + ".ln2", w);
    linear(prefix + ".ff1", w, w * c.ff_mult);
    linear(prefix + ".ff2", w * c.ff_mult, w);
  }

 private:
  Parameters& params_;
  std::mt19937_64 rng_;
};

Var linear(const Bound& p, const std::string& name, Var x) {
  Tape& t = p.tape();
  return t.add_bias(t.matmul(x, p[name + ".w"], name), p[name + ".b"], name);
}

Var layer_norm(const Bound& p, const std::string& name, Var x) {
  return p.tape().layer_norm(x, p[name + ".g"], p[name + ".b"], name);
}

Matrix target_matrix(std::span<const ShapeTargets> targets, bool face, int rows, int cols,
                     std::vector<std::uint8_t>& mask) {
  Matrix m(rows, cols);
  mask.clear();
  std::size_t at = 0;
  for (const auto& tg : targets) {
    const auto& pts = face ? tg.face_points : tg.edge_points;
    const auto& msk = face ? tg.face_mask : tg.edge_mask;
    if (at + pts.size() > m.data.size()) throw IntegrityError("targets exceed the batch's entity count");
    std::copy(pts.begin(), pts.end(), m.data.begin() + static_cast<std::ptrdiff_t>(at));
    at += pts.size();
    mask.insert(mask.end(), msk.begin(), msk.end());
  }
  if (at != m.data.size()) throw IntegrityError("targets do not cover the batch's entities");
  return m;
}

}  // namespace

int ModelConfig::face_features() const {
  return static_cast<int>(BezierTriangle::count(triangle_degree)) * 4;
}

int ModelConfig::edge_features() const { return (curve_degree + 1) * 4; }

void ModelConfig::validate() const {
  auto fail = [](const std::string& w) { throw ConfigError("model config: " + w); };
  if (width < 1) fail("width must be positive");
  if (tokenizer_layers < 0 || dual_layers < 0) fail("layer counts must be non-negative");
  if (tokenizer_heads < 1 || width % tokenizer_heads != 0) fail("width not divisible by tokenizer heads");
  if (dual_heads < 1 || width % dual_heads != 0) fail("width not divisible by dual heads");
  if (ff_mult < 1) fail("feed-forward expansion must be positive");
  if (points_per_primitive < 1) fail("points per primitive must be positive");
  if (face_cap < 1 || edge_cap < 1) fail("caps must be positive");
  if (triangle_degree < 1 || curve_degree < 1) fail("degrees must be positive");
  if (streams != StreamMode::kDual && attention_mode == AttentionMode::kTopology) {
    fail("topology attention needs streams=dual");
  }
}

std::string attention_mode_name(AttentionMode m) { return m == AttentionMode::kTopology ? "topology" : "standard"; }

std::string stream_mode_name(StreamMode m) {
  switch (m) {
    case StreamMode::kDual:
      return "dual";
    case StreamMode::kFaceOnly:
      return "face_only";
    case StreamMode::kMerged:
      return "merged";
  }
  return "dual";
}

AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "topology") return AttentionMode::kTopology;
  if (s == "standard") return AttentionMode::kStandard;
  throw ConfigError("unknown attention mode '" + s + "'");
}

StreamMode parse_stream_mode(const std::string& s) {
  if (s == "dual") return StreamMode::kDual;
  if (s == "face_only") return StreamMode::kFaceOnly;
  if (s == "merged") return StreamMode::kMerged;
  throw ConfigError("unknown stream mode '" + s + "'");
}

std::string ModelConfig::to_json() const {
  json j;
  j["width"] = width;
  j["tokenizer_layers"] = tokenizer_layers;
  j["tokenizer_heads"] = tokenizer_heads;
  j["dual_layers"] = dual_layers;
  j["dual_heads"] = dual_heads;
  j["ff_mult"] = ff_mult;
  j["points_per_primitive"] = points_per_primitive;
  j["face_cap"] = face_cap;
  j["edge_cap"] = edge_cap;
  j["triangle_degree"] = triangle_degree;
  j["curve_degree"] = curve_degree;
  j["edge_supervision"] = edge_supervision;
  j["attention_mode"] = attention_mode_name(attention_mode);
  j["streams"] = stream_mode_name(streams);
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("model config must be an object");
  ModelConfig c;
  static const std::set<std::string> known{"width",          "tokenizer_layers",     "tokenizer_heads", "dual_layers",
                                           "dual_heads",     "ff_mult",              "points_per_primitive",
                                           "face_cap",       "edge_cap",             "triangle_degree", "curve_degree",
                                           "edge_supervision", "attention_mode",     "streams"};
  try {
    for (const auto& [key, v] : j.items()) {
      if (!known.count(key)) throw ConfigError("model config: unknown field '" + key + "'");
    }
    auto get_int = [&](const char* key, int& out) {
      if (j.contains(key)) out = j.at(key).get<int>();
    };
    get_int("width", c.width);
    get_int("tokenizer_layers", c.tokenizer_layers);
    get_int("tokenizer_heads", c.tokenizer_heads);
    get_int("dual_layers", c.dual_layers);
    get_int("dual_heads", c.dual_heads);
    get_int("ff_mult", c.ff_mult);
    get_int("points_per_primitive", c.points_per_primitive);
    get_int("face_cap", c.face_cap);
    get_int("edge_cap", c.edge_cap);
    get_int("triangle_degree", c.triangle_degree);
    get_int("curve_degree", c.curve_degree);
    if (j.contains("edge_supervision")) c.edge_supervision = j.at("edge_supervision").get<bool>();
    if (j.contains("attention_mode")) c.attention_mode = parse_attention_mode(j.at("attention_mode").get<std::string>());
    if (j.contains("streams")) c.streams = parse_stream_mode(j.at("streams").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void Parameters::add(const std::string& name, Matrix value) {
  if (contains(name)) throw IntegrityError("duplicate parameter '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
}

std::size_t Parameters::index_of(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw IntegrityError("missing parameter '" + name + "'");
  return it->second;
}

const Matrix& Parameters::at(const std::string& name) const { return values_[index_of(name)]; }
Matrix& Parameters::at(const std::string& name) { return values_[index_of(name)]; }

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Parameters init_parameters(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  Parameters params;
  params.seed = seed;
  Initializer init(params, seed);
  const bool edges = c.has_edge_stream();
  const bool topology = c.attention_mode == AttentionMode::kTopology;

  init.linear("embed.face.fc1", c.face_features(), c.width);
  init.linear("embed.face.fc2", c.width, c.width);
  if (edges) {
    init.linear("embed.edge.fc1", c.edge_features(), c.width);
    init.linear("embed.edge.fc2", c.width, c.width);
  }
  for (const std::string s : {"face", "edge"}) {
    if (s == "edge" && !edges) continue;
    init.weight("tok." + s + ".agg", 1, c.width);
    for (int l = 0; l < c.tokenizer_layers; ++l) init.block(layer_prefix("tok." + s, l), c, c.tokenizer_heads, false);
  }
  for (int l = 0; l < c.dual_layers; ++l) {
    switch (c.streams) {
      case StreamMode::kDual:
        init.block(layer_prefix("dual.face", l), c, c.dual_heads, topology);
        init.block(layer_prefix("dual.edge", l), c, c.dual_heads, topology);
        break;
      case StreamMode::kFaceOnly:
        init.block(layer_prefix("dual.face", l), c, c.dual_heads, false);
        break;
      case StreamMode::kMerged:
        init.block(layer_prefix("dual.merged", l), c, c.dual_heads, false);
        break;
    }
  }
  init.linear("head.face", c.width, c.face_outputs());
  if (edges) init.linear("head.edge", c.width, c.edge_outputs());
  return params;
}

Bound::Bound(Tape& tape, const Parameters& params, const std::function<bool(const std::string&)>& trainable)
    : tape_(&tape), params_(&params) {
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool g = trainable ? trainable(params.name(i)) : true;
    vars_.push_back(tape.leaf(params.value(i), g, params.name(i)));
  }
}

Var Bound::operator[](const std::string& name) const { return vars_[params_->index_of(name)]; }

Var embed_primitives(const Bound& p, const TokenBatch& batch, bool face, const ModelConfig& config) {
  const int cap = face ? batch.face_cap : batch.edge_cap;
  const int features = face ? batch.face_features() : batch.edge_features();
  const int entities = face ? batch.face_total() : batch.edge_total();
  const auto& tensor = face ? batch.face_tensor : batch.edge_tensor;
  const auto& pmask = face ? batch.face_primitive_mask : batch.edge_primitive_mask;
  if (features != (face ? config.face_features() : config.edge_features())) {
    throw IntegrityError("primitive feature size does not match the model config");
  }
  const int rows = entities * cap;
  if (tensor.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(features) ||
      pmask.size() != static_cast<std::size_t>(rows)) {
    throw IntegrityError("token tensor shape mismatch");
  }
  Tape& t = p.tape();
  Matrix x(rows, features);
  x.data = tensor;
  const std::string s = face ? "face" : "edge";
  const Var in = t.constant(std::move(x), "primitives." + s);
  const Var h = t.gelu(linear(p, "embed." + s + ".fc1", in), "embed." + s + ".act");
  const Var e = linear(p, "embed." + s + ".fc2", h);
  return t.mask_rows(e, std::vector<double>(pmask.begin(), pmask.end()), "embed." + s);
}

Var encode_entities(const Bound& p, Var embeddings, const TokenBatch& batch, bool face, const ModelConfig& config) {
  const int cap = face ? batch.face_cap : batch.edge_cap;
  const int entities = face ? batch.face_total() : batch.edge_total();
  const auto& pmask = face ? batch.face_primitive_mask : batch.edge_primitive_mask;
  const std::string s = face ? "face" : "edge";
  Tape& t = p.tape();

  // Sequence rows: entity j occupies [j * (cap + 1), (j + 1) * (cap + 1)),
  // aggregate first.
  const int seq = cap + 1;
  std::vector<int> order;
  std::vector<int> agg_rows;
  AttentionLayout layout;
  order.reserve(static_cast<std::size_t>(entities * seq));
  for (int j = 0; j < entities; ++j) {
    const int base = j * seq;
    std::vector<int> keys{base};
    order.push_back(0);
    for (int k = 0; k < cap; ++k) {
      order.push_back(1 + j * cap + k);
      if (pmask[static_cast<std::size_t>(j * cap + k)]) keys.push_back(base + 1 + k);
    }
    if (keys.size() == 1) throw IntegrityError(s + " " + std::to_string(j) + " has no valid primitive");
    for (int k = 0; k < seq; ++k) layout.keys.push_back(keys);
    agg_rows.push_back(base);
  }
  Var x = t.gather_rows(t.concat_rows({p["tok." + s + ".agg"], embeddings}), order, "tok." + s + ".sequence");
  for (int l = 0; l < config.tokenizer_layers; ++l) {
    x = transformer_block(p, layer_prefix("tok." + s, l), x, config.tokenizer_heads, layout, Var{}, config);
  }
  return t.gather_rows(x, agg_rows, "tok." + s + ".tokens");
}

AttentionLayout stream_layout(std::span<const int> counts, const std::vector<AdjacencyTriple>* adjacency) {
  AttentionLayout layout;
  int start = 0;
  for (int n : counts) {
    std::vector<int> keys(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) keys[static_cast<std::size_t>(i)] = start + i;
    for (int i = 0; i < n; ++i) layout.keys.push_back(keys);
    start += n;
  }
  if (adjacency) {
    layout.bias.resize(layout.keys.size());
    auto position = [&](int query, int key) {
      const auto& keys = layout.keys[static_cast<std::size_t>(query)];
      const auto it = std::lower_bound(keys.begin(), keys.end(), key);
      if (it == keys.end() || *it != key) throw IntegrityError("adjacency pair crosses models");
      return static_cast<int>(it - keys.begin());
    };
    for (const auto& tr : *adjacency) {
      if (tr.a < 0 || tr.b < 0 || tr.a >= start || tr.b >= start || tr.shared < 0) {
        throw IntegrityError("adjacency index out of range");
      }
      if (tr.a == tr.b) continue;
      layout.bias[static_cast<std::size_t>(tr.a)].emplace_back(position(tr.a, tr.b), tr.shared);
      layout.bias[static_cast<std::size_t>(tr.b)].emplace_back(position(tr.b, tr.a), tr.shared);
    }
  }
  return layout;
}

Var transformer_block(const Bound& p, const std::string& prefix, Var x, int heads, const AttentionLayout& layout,
                      Var bias, const ModelConfig& config) {
  (void)config;
  Tape& t = p.tape();
  const Var h = layer_norm(p, prefix + ".ln1", x);
  const Var q = linear(p, prefix + ".attn.q", h);
  const Var k = linear(p, prefix + ".attn.k", h);
  const Var v = linear(p, prefix + ".attn.v", h);
  const Var a = t.attention(q, k, v, heads, layout, bias, prefix + ".attn");
  const Var x1 = t.add(x, linear(p, prefix + ".attn.o", a), prefix + ".residual1");
  const Var f = t.gelu(linear(p, prefix + ".ff1", layer_norm(p, prefix + ".ln2", x1)), prefix + ".ff.act");
  return t.add(x1, linear(p, prefix + ".ff2", f), prefix + ".residual2");
}

Forward forward(const Bound& p, const TokenBatch& batch, const ModelConfig& config) {
  config.validate();
  check_batch(batch);
  if (batch.face_cap != config.face_cap || batch.edge_cap != config.edge_cap) {
    throw ConfigError("batch caps do not match the model config");
  }
  Tape& t = p.tape();
  Forward out;
  const bool edges = config.has_edge_stream();
  Var xf = encode_entities(p, embed_primitives(p, batch, true, config), batch, true, config);
  Var xe;
  if (edges) xe = encode_entities(p, embed_primitives(p, batch, false, config), batch, false, config);
  out.face_tokens0 = xf;
  out.edge_tokens0 = xe;

  const int nf = batch.face_total();
  switch (config.streams) {
    case StreamMode::kDual: {
      const bool topo = config.attention_mode == AttentionMode::kTopology;
      const AttentionLayout fl = stream_layout(batch.face_counts, topo ? &batch.face_adjacency : nullptr);
      const AttentionLayout el = stream_layout(batch.edge_counts, topo ? &batch.edge_adjacency : nullptr);
      for (int l = 0; l < config.dual_layers; ++l) {
        const std::string pf = layer_prefix("dual.face", l);
        const std::string pe = layer_prefix("dual.edge", l);
        Var bf, be;
        if (topo) {
          bf = t.add_bias(t.matmul(xe, p[pf + ".topo.w"]), p[pf + ".topo.b"], pf + ".topo");
          be = t.add_bias(t.matmul(xf, p[pe + ".topo.w"]), p[pe + ".topo.b"], pe + ".topo");
        }
        const Var nf_tokens = transformer_block(p, pf, xf, config.dual_heads, fl, bf, config);
        const Var ne_tokens = transformer_block(p, pe, xe, config.dual_heads, el, be, config);
        xf = nf_tokens;
        xe = ne_tokens;
      }
      break;
    }
    case StreamMode::kFaceOnly: {
      const AttentionLayout fl = stream_layout(batch.face_counts, nullptr);
      for (int l = 0; l < config.dual_layers; ++l) {
        xf = transformer_block(p, layer_prefix("dual.face", l), xf, config.dual_heads, fl, Var{}, config);
      }
      break;
    }
    case StreamMode::kMerged: {
      // Faces first, then edges; each token sees its own model's tokens.
      AttentionLayout ml;
      ml.keys.resize(static_cast<std::size_t>(nf + batch.edge_total()));
      for (int m = 0; m < batch.model_count(); ++m) {
        std::vector<int> keys;
        for (int i = 0; i < batch.face_counts[static_cast<std::size_t>(m)]; ++i) keys.push_back(batch.face_offset(m) + i);
        for (int i = 0; i < batch.edge_counts[static_cast<std::size_t>(m)]; ++i) {
          keys.push_back(nf + batch.edge_offset(m) + i);
        }
        for (int k : keys) ml.keys[static_cast<std::size_t>(k)] = keys;
      }
      if (config.dual_layers > 0) {
        Var x = t.concat_rows({xf, xe}, "dual.merged.tokens");
        for (int l = 0; l < config.dual_layers; ++l) {
          x = transformer_block(p, layer_prefix("dual.merged", l), x, config.dual_heads, ml, Var{}, config);
        }
        std::vector<int> fi(static_cast<std::size_t>(nf)), ei(static_cast<std::size_t>(batch.edge_total()));
        for (int i = 0; i < nf; ++i) fi[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < batch.edge_total(); ++i) ei[static_cast<std::size_t>(i)] = nf + i;
        xf = t.gather_rows(x, fi, "dual.merged.face");
        xe = t.gather_rows(x, ei, "dual.merged.edge");
      }
      break;
    }
  }
  out.face_tokens = xf;
  out.edge_tokens = xe;
  out.face_pred = linear(p, "head.face", xf);
  if (edges) out.edge_pred = linear(p, "head.edge", xe);
  return out;
}

LossTerms pretrain_loss(const Bound& p, const Forward& fwd, std::span<const ShapeTargets> targets,
                        const ModelConfig& config) {
  Tape& t = p.tape();
  for (const auto& tg : targets) {
    if (tg.m != config.points_per_primitive || tg.face_cap != config.face_cap || tg.edge_cap != config.edge_cap) {
      throw IntegrityError("targets do not match the model config's caps or points per primitive");
    }
  }
  const Matrix& fp = t.value(fwd.face_pred);
  std::vector<std::uint8_t> mask;
  Matrix ft = target_matrix(targets, true, fp.rows, fp.cols, mask);
  LossTerms out;
  out.face = t.masked_mse(fwd.face_pred, ft, mask, "loss.face");
  if (config.has_edge_stream() && config.edge_supervision) {
    const Matrix& ep = t.value(fwd.edge_pred);
    Matrix et = target_matrix(targets, false, ep.rows, ep.cols, mask);
    out.edge = t.masked_mse(fwd.edge_pred, et, mask, "loss.edge");
  } else {
    out.edge = t.constant(Matrix(1, 1, 0.0), "loss.edge");
  }
  out.total = t.add(out.face, out.edge, "loss.total");
  return out;
}

Gradients compute_gradients(const Parameters& params, const TokenBatch& batch, std::span<const ShapeTargets> targets,
                            const ModelConfig& config, double loss_scale,
                            const std::function<bool(const std::string&)>& trainable) {
  Tape tape;
  const Bound p(tape, params, trainable);
  const Forward fwd = forward(p, batch, config);
  const LossTerms loss = pretrain_loss(p, fwd, targets, config);
  tape.backward(loss.total, loss_scale);
  Gradients g;
  g.loss = {tape.value(loss.total).data[0], tape.value(loss.face).data[0], tape.value(loss.edge).data[0]};
  g.grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& gr = tape.grad(p.var(i));
    g.grads.push_back(gr.size() == 0 ? Matrix(params.value(i).rows, params.value(i).cols) : gr);
  }
  return g;
}

LossValues evaluate_loss(const Parameters& params, const TokenBatch& batch, std::span<const ShapeTargets> targets,
                         const ModelConfig& config) {
  Tape tape;
  const Bound p(tape, params, [](const std::string&) { return false; });
  const LossTerms loss = pretrain_loss(p, forward(p, batch, config), targets, config);
  return {tape.value(loss.total).data[0], tape.value(loss.face).data[0], tape.value(loss.edge).data[0]};
}

}  // namespace b2s::nn
