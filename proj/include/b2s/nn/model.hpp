#ifndef B2S_NN_MODEL_HPP_
#define B2S_NN_MODEL_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "b2s/nn/autodiff.hpp"
#include "b2s/sampling.hpp"
#include "b2s/tokenize.hpp"

namespace b2s::nn {

enum class AttentionMode { kTopology, kStandard };
enum class StreamMode { kDual, kFaceOnly, kMerged };

struct ModelConfig {
  int width = 128;
  int tokenizer_layers = 3;
  int tokenizer_heads = 4;
  int dual_layers = 6;
  int dual_heads = 4;
  int ff_mult = 4;
  int points_per_primitive = kDefaultPointsPerPrimitive;
  int face_cap = 32;
  int edge_cap = 8;
  int triangle_degree = kStandardTriangleDegree;
  int curve_degree = kStandardCurveDegree;
  bool edge_supervision = true;
  AttentionMode attention_mode = AttentionMode::kTopology;
  StreamMode streams = StreamMode::kDual;

  int face_features() const;
  int edge_features() const;
  int face_outputs() const { return face_cap * points_per_primitive * 3; }
  int edge_outputs() const { return edge_cap * points_per_primitive * 3; }
  bool has_edge_stream() const { return streams != StreamMode::kFaceOnly; }

  // Throws ConfigError.
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

std::string attention_mode_name(AttentionMode m);
std::string stream_mode_name(StreamMode m);
AttentionMode parse_attention_mode(const std::string& s);
StreamMode parse_stream_mode(const std::string& s);

// Named tensors in insertion order.
class Parameters {
 public:
  std::uint64_t seed = 0;

  void add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);
  std::size_t index_of(const std::string& name) const;

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  std::size_t scalar_count() const;

  bool operator==(const Parameters& o) const { return seed == o.seed && names_ == o.names_ && values_ == o.values_; }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Truncated normal (sigma 0.02, cut at 2 sigma) weights; zero biases and
// topology-bias projections; unit layer-norm gains.
Parameters init_parameters(const ModelConfig& config, std::uint64_t seed);

// Parameters placed on a tape. Only names accepted by `trainable` get
// gradients.
class Bound {
 public:
  Bound(Tape& tape, const Parameters& params, const std::function<bool(const std::string&)>& trainable = nullptr);

  Var operator[](const std::string& name) const;
  Var var(std::size_t i) const { return vars_[i]; }
  Tape& tape() const { return *tape_; }
  const Parameters& params() const { return *params_; }

 private:
  Tape* tape_;
  const Parameters* params_;
  std::vector<Var> vars_;
};

// Stream outputs; absent streams hold invalid Vars.
struct Forward {
  Var face_tokens0;
  Var edge_tokens0;
  Var face_tokens;
  Var edge_tokens;
  Var face_pred;
  Var edge_pred;
};

struct LossTerms {
  Var total;
  Var face;
  Var edge;
};

// Per-primitive MLP; result rows are entity-major, masked slots zero.
Var embed_primitives(const Bound& p, const TokenBatch& batch, bool face, const ModelConfig& config);
// Aggregate-token encoder over each entity's valid primitives.
Var encode_entities(const Bound& p, Var embeddings, const TokenBatch& batch, bool face, const ModelConfig& config);

// Query i attends to every entity of its own model. With `adjacency`
// non-null, each triple (a, b, s) adds bias row s to pairs (a, b) and (b, a).
AttentionLayout stream_layout(std::span<const int> counts, const std::vector<AdjacencyTriple>* adjacency);

// Pre-norm block: x + Attn(LN(x)), then + FF(LN(.)).
Var transformer_block(const Bound& p, const std::string& prefix, Var x, int heads, const AttentionLayout& layout,
                      Var bias, const ModelConfig& config);

// Both streams from the entity tokens through the dual transformer and heads.
Forward forward(const Bound& p, const TokenBatch& batch, const ModelConfig& config);

// Targets for a batch are given per model, in batch order.
LossTerms pretrain_loss(const Bound& p, const Forward& fwd, std::span<const ShapeTargets> targets,
                        const ModelConfig& config);

struct LossValues {
  double total = 0.0;
  double face = 0.0;
  double edge = 0.0;
};

// Loss and gradients (one matrix per parameter, zero where unused).
struct Gradients {
  LossValues loss;
  std::vector<Matrix> grads;
};

Gradients compute_gradients(const Parameters& params, const TokenBatch& batch, std::span<const ShapeTargets> targets,
                            const ModelConfig& config, double loss_scale = 1.0,
                            const std::function<bool(const std::string&)>& trainable = nullptr);
LossValues evaluate_loss(const Parameters& params, const TokenBatch& batch, std::span<const ShapeTargets> targets,
                         const ModelConfig& config);

}  // namespace b2s::nn

#endif  // B2S_NN_MODEL_HPP_
