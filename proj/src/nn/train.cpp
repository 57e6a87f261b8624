#include "b2s/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "b2s/errors.hpp"
#include "b2s/io_util.hpp"

namespace b2s::nn {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

LossValues checked_loss(const LossValues& l, long step) {
  if (!std::isfinite(l.total)) throw TrainingError("loss is not finite at step " + std::to_string(step), step);
  return l;
}

std::vector<int> concat_labels(std::span<const LabeledModel> data) {
  std::vector<int> out;
  for (const auto& d : data) out.insert(out.end(), d.labels.begin(), d.labels.end());
  return out;
}

TokenBatch concat_models(std::span<const LabeledModel> data) {
  std::vector<TokenBatch> batches;
  batches.reserve(data.size());
  for (const auto& d : data) batches.push_back(d.batch);
  return concat_batches(batches);
}

void check_labels(std::span<const LabeledModel> data, Task task, int classes) {
  if (data.empty()) throw ArgumentError("fine-tuning needs at least one labeled model");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& d = data[i];
    const std::size_t want = task == Task::kClassify ? 1 : static_cast<std::size_t>(d.batch.face_total());
    if (d.batch.model_count() != 1) throw IntegrityError("each labeled entry must hold one model");
    if (d.labels.size() != want) {
      throw IntegrityError("model " + std::to_string(i) + ": expected " + std::to_string(want) + " labels, got " +
                           std::to_string(d.labels.size()));
    }
    for (int y : d.labels) {
      if (y < 0 || y >= classes) throw IntegrityError("label " + std::to_string(y) + " outside [0, classes)");
    }
  }
}

}  // namespace

Sample prepare_sample(const BrepModel& model, const ModelConfig& config, const DecomposeOptions& options) {
  DecomposeOptions opts = options;
  opts.triangle_degree = config.triangle_degree;
  opts.curve_degree = config.curve_degree;
  const ModelPrimitives prims = decompose_model(model, opts);
  const PrimitiveCaps caps{config.face_cap, config.edge_cap};
  return {tokenize_model(model, prims, caps), sample_entity_points(model, prims, config.points_per_primitive, caps)};
}

double cosine_lr(double base, long step, long total) {
  if (total <= 0) return base;
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

AdamW::AdamW(const Parameters& params, const OptimizerSettings& settings, long total_steps,
             std::function<bool(const std::string&)> trainable)
    : settings_(settings), total_(total_steps) {
  if (!(settings.lr >= 0.0) || !(settings.weight_decay >= 0.0) || !(settings.beta1 >= 0.0 && settings.beta1 < 1.0) ||
      !(settings.beta2 >= 0.0 && settings.beta2 < 1.0) || !(settings.eps > 0.0)) {
    throw ArgumentError("invalid optimizer settings");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    active_.push_back(trainable ? trainable(params.name(i)) : true);
    m_.emplace_back(params.value(i).rows, params.value(i).cols);
    v_.emplace_back(params.value(i).rows, params.value(i).cols);
  }
}

void AdamW::update(Parameters& params, const std::vector<Matrix>& grads, long step) {
  if (grads.size() != params.size()) throw IntegrityError("gradient count does not match parameters");
  const double lr = lr_at(step);
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step + 1));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step + 1));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active_[i]) continue;
    Matrix& p = params.value(i);
    const Matrix& g = grads[i];
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      p.data[k] -= lr * settings_.weight_decay * p.data[k];
      m.data[k] = b1 * m.data[k] + (1.0 - b1) * g.data[k];
      v.data[k] = b2 * v.data[k] + (1.0 - b2) * g.data[k] * g.data[k];
      p.data[k] -= lr * (m.data[k] / c1) / (std::sqrt(v.data[k] / c2) + settings_.eps);
    }
  }
}

TrainResult train(std::span<const Sample> data, const ModelConfig& config, const TrainOptions& options,
                  Parameters init) {
  if (data.empty()) throw ArgumentError("training needs a non-empty data set");
  if (options.steps < 0) throw ArgumentError("steps must be non-negative");
  TrainResult result;
  result.params = std::move(init);
  AdamW opt(result.params, options.optimizer, options.steps);
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  for (long step = 0; step < options.steps; ++step) {
    if (cursor == order.size()) {
      if (options.shuffle) std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const Sample& s = data[order[cursor++]];
    Gradients g;
    try {
      g = compute_gradients(result.params, s.batch, std::span<const ShapeTargets>(&s.targets, 1), config);
    } catch (const NumericError& e) {
      throw TrainingError("step " + std::to_string(step) + ": " + e.what(), step);
    }
    result.trace.push_back({step, checked_loss(g.loss, step)});
    opt.update(result.params, g.grads, step);
  }
  return result;
}

LossValues dataset_loss(const Parameters& params, std::span<const Sample> data, const ModelConfig& config) {
  LossValues sum;
  for (const auto& s : data) {
    const LossValues l = evaluate_loss(params, s.batch, std::span<const ShapeTargets>(&s.targets, 1), config);
    sum.total += l.total;
    sum.face += l.face;
    sum.edge += l.edge;
  }
  const double n = static_cast<double>(std::max<std::size_t>(data.size(), 1));
  return {sum.total / n, sum.face / n, sum.edge / n};
}

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "step,total,face,edge\n";
  for (const auto& r : trace) os << r.step << ',' << r.loss.total << ',' << r.loss.face << ',' << r.loss.edge << '\n';
  return os.str();
}

void write_loss_trace(const std::vector<LossRecord>& trace, const std::filesystem::path& path) {
  atomic_write(path, loss_trace_csv(trace));
}

std::vector<std::uint8_t> write_checkpoint_bytes(const Checkpoint& ckpt) {
  ByteWriter w;
  w.magic("B2C1");
  w.u32(kCheckpointVersion);
  w.str(ckpt.config.to_json());
  w.u64(ckpt.params.seed);
  w.u64(ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const Matrix& m = ckpt.params.value(i);
    w.str(ckpt.params.name(i));
    w.u32(static_cast<std::uint32_t>(m.rows));
    w.u32(static_cast<std::uint32_t>(m.cols));
    for (double x : m.data) w.f64(x);
  }
  return w.bytes();
}

Checkpoint read_checkpoint_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("B2C1");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config = ModelConfig::from_json(r.str());
  c.params.seed = r.u64();
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols * 8 > r.remaining()) throw ParseError("checkpoint tensor truncated");
    Matrix m(static_cast<int>(rows), static_cast<int>(cols));
    for (double& x : m.data) x = r.f64();
    try {
      c.params.add(name, std::move(m));
    } catch (const IntegrityError& e) {
      throw ParseError(e.what());
    }
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint");
  return c;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  atomic_write(path, write_checkpoint_bytes(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return read_checkpoint_bytes(read_bytes(path)); }

Task parse_task(const std::string& s) {
  if (s == "classify") return Task::kClassify;
  if (s == "segment") return Task::kSegment;
  throw ArgumentError("unknown task '" + s + "'");
}

Strategy parse_strategy(const std::string& s) {
  if (s == "linear") return Strategy::kLinear;
  if (s == "partial") return Strategy::kPartial;
  if (s == "full") return Strategy::kFull;
  throw ArgumentError("unknown strategy '" + s + "'");
}

std::string task_name(Task t) { return t == Task::kClassify ? "classify" : "segment"; }

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kLinear:
      return "linear";
    case Strategy::kPartial:
      return "partial";
    case Strategy::kFull:
      return "full";
  }
  return "full";
}

std::function<bool(const std::string&)> strategy_filter(Strategy s) {
  switch (s) {
    case Strategy::kLinear:
      return [](const std::string& n) { return starts_with(n, "task."); };
    case Strategy::kPartial:
      return [](const std::string& n) { return starts_with(n, "task.") || starts_with(n, "dual."); };
    case Strategy::kFull:
      break;
  }
  return [](const std::string& n) { return !starts_with(n, "head."); };
}

Var task_logits(const Bound& p, const TokenBatch& batch, const ModelConfig& config, Task task) {
  Tape& t = p.tape();
  Var x = forward(p, batch, config).face_tokens;
  if (task == Task::kClassify) {
    std::vector<std::vector<int>> groups;
    for (int m = 0; m < batch.model_count(); ++m) {
      std::vector<int> g(static_cast<std::size_t>(batch.face_counts[static_cast<std::size_t>(m)]));
      std::iota(g.begin(), g.end(), batch.face_offset(m));
      groups.push_back(std::move(g));
    }
    x = t.mean_rows(x, groups, "task.pool");
  }
  return t.add_bias(t.matmul(x, p["task.w"], "task"), p["task.b"], "task.logits");
}

std::vector<int> predict(const Parameters& params, const TokenBatch& batch, const ModelConfig& config, Task task) {
  Tape tape;
  const Bound p(tape, params, [](const std::string&) { return false; });
  const Matrix& z = tape.value(task_logits(p, batch, config, task));
  std::vector<int> out;
  for (int i = 0; i < z.rows; ++i) out.push_back(static_cast<int>(std::max_element(z.row(i), z.row(i) + z.cols) - z.row(i)));
  return out;
}

double accuracy(const Parameters& params, std::span<const LabeledModel> data, const ModelConfig& config, Task task) {
  const std::vector<int> labels = concat_labels(data);
  const std::vector<int> pred = predict(params, concat_models(data), config, task);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
  return labels.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(labels.size());
}

FinetuneResult finetune_head(const Parameters& pretrained, std::span<const LabeledModel> data,
                             const ModelConfig& config, const FinetuneOptions& options) {
  if (options.classes < 2) throw ArgumentError("fine-tuning needs at least two classes");
  if (options.steps < 0) throw ArgumentError("steps must be non-negative");
  check_labels(data, options.task, options.classes);

  FinetuneResult result;
  result.params.seed = pretrained.seed;
  for (std::size_t i = 0; i < pretrained.size(); ++i) {
    if (!starts_with(pretrained.name(i), "task.")) result.params.add(pretrained.name(i), pretrained.value(i));
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  Matrix w(config.width, options.classes);
  for (double& x : w.data) {
    do {
      x = normal(rng);
    } while (std::abs(x) > 0.04);
  }
  result.params.add("task.w", std::move(w));
  result.params.add("task.b", Matrix(1, options.classes));

  const auto trainable = strategy_filter(options.strategy);
  const std::size_t per_step = options.batch_models <= 0
                                   ? data.size()
                                   : std::min(data.size(), static_cast<std::size_t>(options.batch_models));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  AdamW opt(result.params, options.optimizer, options.steps, trainable);
  for (long step = 0; step < options.steps; ++step) {
    std::vector<LabeledModel> chunk;
    while (chunk.size() < per_step) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      chunk.push_back(data[order[cursor++]]);
    }
    const TokenBatch batch = concat_models(chunk);
    const std::vector<int> labels = concat_labels(chunk);
    Tape tape;
    const Bound p(tape, result.params, trainable);
    Var loss;
    try {
      loss = tape.cross_entropy(task_logits(p, batch, config, options.task), labels, "task.loss");
      tape.backward(loss);
    } catch (const NumericError& e) {
      throw TrainingError("step " + std::to_string(step) + ": " + e.what(), step);
    }
    const double l = tape.value(loss).data[0];
    if (!std::isfinite(l)) throw TrainingError("loss is not finite at step " + std::to_string(step), step);
    result.loss.push_back(l);
    std::vector<Matrix> grads;
    for (std::size_t i = 0; i < result.params.size(); ++i) {
      const Matrix& g = tape.grad(p.var(i));
      grads.push_back(g.size() == 0 ? Matrix(result.params.value(i).rows, result.params.value(i).cols) : g);
    }
    opt.update(result.params, grads, step);
  }
  result.accuracy = accuracy(result.params, data, config, options.task);
  return result;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.width = 8;
  c.tokenizer_layers = 1;
  c.tokenizer_heads = 2;
  c.dual_layers = 2;
  c.dual_heads = 2;
  c.ff_mult = 2;
  c.face_cap = 2;
  c.edge_cap = 1;
  return c;
}

GradcheckResult gradcheck(std::uint64_t seed, int samples, double step, double tolerance) {
  if (samples < 1 || !(step > 0.0)) throw ArgumentError("gradcheck needs samples >= 1 and a positive step");
  const ModelConfig config = toy_config();
  const Sample s = prepare_sample(make_toy_model(), config);
  const std::span<const ShapeTargets> targets(&s.targets, 1);

  Parameters params = init_parameters(config, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double& x : params.value(i).data) x += jitter(rng);
  }

  const Gradients g = compute_gradients(params, s.batch, targets, config);
  // Central differences carry roundoff of order eps * |L| / step.
  const double floor = 1e-6 * std::max(1.0, std::abs(g.loss.total));
  GradcheckResult result;
  std::uniform_int_distribution<std::size_t> pick_tensor(0, params.size() - 1);
  for (int k = 0; k < samples; ++k) {
    const std::size_t ti = pick_tensor(rng);
    std::uniform_int_distribution<std::size_t> pick_elem(0, params.value(ti).size() - 1);
    const std::size_t ei = pick_elem(rng);
    double& x = params.value(ti).data[ei];
    const double x0 = x;
    x = x0 + step;
    const double lp = evaluate_loss(params, s.batch, targets, config).total;
    x = x0 - step;
    const double lm = evaluate_loss(params, s.batch, targets, config).total;
    x = x0;
    const double numeric = (lp - lm) / (2.0 * step);
    const double analytic = g.grads[ti].data[ei];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    ++result.checked;
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst = params.name(ti) + "[" + std::to_string(ei) + "]";
    }
  }
  result.passed = result.max_rel_error < tolerance;
  return result;
}

}  // namespace b2s::nn
