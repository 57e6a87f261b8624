#ifndef B2S_NN_TRAIN_HPP_
#define B2S_NN_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "b2s/nn/model.hpp"

namespace b2s::nn {

struct Sample {
  TokenBatch batch;
  ShapeTargets targets;
};

// Decomposes, samples and tokenizes one model with the config's caps.
Sample prepare_sample(const BrepModel& model, const ModelConfig& config, const DecomposeOptions& options = {});

struct OptimizerSettings {
  double lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// lr * 0.5 * (1 + cos(pi * step / total)).
double cosine_lr(double base, long step, long total);

// Decoupled weight decay applied as p -= lr_t * decay * p before the Adam
// step, over the parameters `trainable` accepts.
class AdamW {
 public:
  AdamW(const Parameters& params, const OptimizerSettings& settings, long total_steps,
        std::function<bool(const std::string&)> trainable = nullptr);

  // `step` counts from 0.
  void update(Parameters& params, const std::vector<Matrix>& grads, long step);
  double lr_at(long step) const { return cosine_lr(settings_.lr, step, total_); }

 private:
  OptimizerSettings settings_;
  long total_;
  std::vector<bool> active_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

struct LossRecord {
  long step = 0;
  LossValues loss;
};

struct TrainOptions {
  OptimizerSettings optimizer;
  long steps = 100;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

struct TrainResult {
  Parameters params;
  std::vector<LossRecord> trace;
};

// One sample per step; each pass over the data is shuffled from the seed.
// Throws TrainingError at the first step whose loss or gradient is not
// finite.
TrainResult train(std::span<const Sample> data, const ModelConfig& config, const TrainOptions& options,
                  Parameters init);
// Mean loss over the data set.
LossValues dataset_loss(const Parameters& params, std::span<const Sample> data, const ModelConfig& config);

std::string loss_trace_csv(const std::vector<LossRecord>& trace);
void write_loss_trace(const std::vector<LossRecord>& trace, const std::filesystem::path& path);

struct Checkpoint {
  ModelConfig config;
  Parameters params;

  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> write_checkpoint_bytes(const Checkpoint& ckpt);
Checkpoint read_checkpoint_bytes(std::span<const std::uint8_t> bytes);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

enum class Task { kClassify, kSegment };
enum class Strategy { kLinear, kPartial, kFull };

Task parse_task(const std::string& s);
Strategy parse_strategy(const std::string& s);
std::string task_name(Task t);
std::string strategy_name(Strategy s);

// Which parameter names a strategy trains.
std::function<bool(const std::string&)> strategy_filter(Strategy s);

struct FinetuneOptions {
  Task task = Task::kClassify;
  Strategy strategy = Strategy::kFull;
  int classes = 2;
  OptimizerSettings optimizer{3e-3, 0.01};
  long steps = 300;
  // Models per step, drawn in seeded shuffled passes; 0 takes all of them.
  int batch_models = 8;
  std::uint64_t seed = 0;
};

// Labels: one per model (classify) or one per face (segment).
struct LabeledModel {
  TokenBatch batch;
  std::vector<int> labels;
};

struct FinetuneResult {
  Parameters params;
  std::vector<double> loss;
  double accuracy = 0.0;
};

// Adds a fresh "task" linear layer and trains it with the strategy's
// parameter subset. Throws IntegrityError when labels do not match entity counts.
FinetuneResult finetune_head(const Parameters& pretrained, std::span<const LabeledModel> data,
                             const ModelConfig& config, const FinetuneOptions& options);
Var task_logits(const Bound& p, const TokenBatch& batch, const ModelConfig& config, Task task);
std::vector<int> predict(const Parameters& params, const TokenBatch& batch, const ModelConfig& config, Task task);
double accuracy(const Parameters& params, std::span<const LabeledModel> data, const ModelConfig& config, Task task);

struct GradcheckResult {
  int checked = 0;
  double max_rel_error = 0.0;
  std::string worst;
  bool passed = false;
};

// Central differences against the analytic gradient on the two-face toy
// model with randomized parameters.
GradcheckResult gradcheck(std::uint64_t seed, int samples = 50, double step = 1e-5, double tolerance = 1e-4);
ModelConfig toy_config();

}  // namespace b2s::nn

#endif  // B2S_NN_TRAIN_HPP_
