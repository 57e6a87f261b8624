// b2s: command-line front end for the B-rep to shape pipeline.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "b2s/brep.hpp"
#include "b2s/decompose.hpp"
#include "b2s/errors.hpp"
#include "b2s/io_util.hpp"
#include "b2s/nn/train.hpp"
#include "b2s/primitives.hpp"
#include "b2s/sampling.hpp"
#include "b2s/tokenize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace b2s;

namespace {

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IntegrityError("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

class Report {
 public:
  explicit Report(std::string command) { doc_["command"] = std::move(command); }

  void input(const fs::path& path) {
    doc_["inputs"].push_back({{"path", path.string()}, {"sha256", sha256_hex(read_bytes(path))}});
  }
  json& config() { return doc_["config"]; }
  json& metrics() { return doc_["metrics"]; }
  void warn(const std::string& w) { doc_["warnings"].push_back(w); }
  void error(const std::string& kind, const std::string& what) {
    doc_["errors"].push_back({{"kind", kind}, {"message", what}});
  }
  bool ok() const { return !doc_.contains("errors") || doc_["errors"].empty(); }

  void finish(double seconds, int exit_code, const std::string& path) {
    doc_["wall_time_s"] = seconds;
    doc_["exit_code"] = exit_code;
    if (!doc_.contains("errors")) doc_["errors"] = json::array();
    if (!path.empty()) atomic_write(path, doc_.dump(2) + "\n");
  }

 private:
  json doc_;
};

std::string kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kArgument:
      return "argument";
    case ErrorKind::kParse:
      return "parse";
    case ErrorKind::kIntegrity:
      return "integrity";
    case ErrorKind::kNumeric:
      return "numeric";
  }
  return "unknown";
}

json cells_summary(const ModelPrimitives& prims) {
  json faces = json::array();
  for (const auto& f : prims.faces) {
    faces.push_back({{"triangles", f.triangles.size()},
                     {"cells", f.cells.size()},
                     {"unconverged_cells", f.unconverged_cells},
                     {"boundary_rmse", f.report.rmse}});
  }
  return faces;
}

// Token/target pairs sharing a file stem, sorted by stem.
std::vector<std::pair<std::string, nn::Sample>> load_dataset(const fs::path& dir, Report& rep, bool need_targets) {
  if (!fs::is_directory(dir)) throw ArgumentError("data directory " + dir.string() + " does not exist");
  std::vector<fs::path> tokens;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".b2t") tokens.push_back(e.path());
  }
  std::sort(tokens.begin(), tokens.end());
  if (tokens.empty()) throw ArgumentError("no .b2t token files in " + dir.string());
  std::vector<std::pair<std::string, nn::Sample>> out;
  for (const auto& t : tokens) {
    nn::Sample s;
    rep.input(t);
    s.batch = read_batch(t);
    fs::path tg = t;
    tg.replace_extension(".b2s");
    if (fs::exists(tg)) {
      rep.input(tg);
      s.targets = read_targets(tg);
    } else if (need_targets) {
      throw ArgumentError("missing targets " + tg.string() + " for " + t.string());
    }
    out.emplace_back(t.stem().string(), std::move(s));
  }
  return out;
}

json loss_json(const nn::LossValues& l) { return {{"total", l.total}, {"face", l.face}, {"edge", l.edge}}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"B-rep decomposition, tokenization and dual-transformer training"};
  app.require_subcommand(1);
  std::string report_path;
  app.add_option("--report", report_path, "Write a JSON run report here");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic solid");
  std::string gen_kind, gen_out;
  SolidParams gen_params;
  std::uint64_t gen_seed = 0;
  gen->add_option("kind", gen_kind, "box | cylinder | trimmed_plate | lofted_wedge")->required();
  gen->add_option("-o,--out", gen_out, "Interchange file")->required();
  gen->add_option("--seed", gen_seed);
  gen->add_option("--a", gen_params.a);
  gen->add_option("--b", gen_params.b);
  gen->add_option("--c", gen_params.c);
  gen->add_option("--d", gen_params.d);
  gen->add_option("--jitter", gen_params.jitter);
  gen->add_flag("--random-pose", gen_params.random_pose);

  // decompose
  auto* dec = app.add_subcommand("decompose", "Decompose a model into Bezier primitives");
  std::string dec_in, dec_out;
  DecomposeOptions dec_opts;
  dec->add_option("in", dec_in)->required();
  dec->add_option("-o,--out", dec_out)->required();
  dec->add_option("--tau", dec_opts.tau, "Chord-to-arc threshold")->capture_default_str();
  dec->add_option("--max-depth", dec_opts.max_depth)->capture_default_str();

  // sample
  auto* smp = app.add_subcommand("sample", "Sample shape targets");
  std::string smp_in, smp_prims, smp_out;
  int smp_m = kDefaultPointsPerPrimitive;
  PrimitiveCaps smp_caps;
  smp->add_option("in", smp_in)->required();
  smp->add_option("primitives", smp_prims)->required();
  smp->add_option("-o,--out", smp_out)->required();
  smp->add_option("-m", smp_m, "Points per primitive")->capture_default_str();
  smp->add_option("--face-cap", smp_caps.face)->capture_default_str();
  smp->add_option("--edge-cap", smp_caps.edge)->capture_default_str();

  // tokenize
  auto* tok = app.add_subcommand("tokenize", "Build the fixed-shape model input");
  std::string tok_in, tok_prims, tok_out;
  PrimitiveCaps tok_caps;
  tok->add_option("in", tok_in)->required();
  tok->add_option("primitives", tok_prims)->required();
  tok->add_option("-o,--out", tok_out)->required();
  tok->add_option("--face-cap", tok_caps.face)->capture_default_str();
  tok->add_option("--edge-cap", tok_caps.edge)->capture_default_str();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Pre-train on a directory of .b2t/.b2s pairs");
  std::string pre_dir, pre_config, pre_out, pre_trace;
  long pre_steps = 100;
  std::uint64_t pre_seed = 0;
  int pre_width = 0;
  nn::OptimizerSettings pre_opt;
  pre->add_option("data_dir", pre_dir)->required();
  pre->add_option("-o,--out", pre_out, "Checkpoint")->required();
  pre->add_option("--config", pre_config, "Model config JSON");
  pre->add_option("--width", pre_width, "Override the hidden width");
  pre->add_option("--steps", pre_steps)->capture_default_str();
  pre->add_option("--seed", pre_seed)->capture_default_str();
  pre->add_option("--lr", pre_opt.lr)->capture_default_str();
  pre->add_option("--weight-decay", pre_opt.weight_decay)->capture_default_str();
  pre->add_option("--trace", pre_trace, "Loss trace CSV (default: <out>.loss.csv)");

  // finetune
  auto* ft = app.add_subcommand("finetune", "Fine-tune a task head");
  std::string ft_ckpt, ft_task = "classify", ft_labels, ft_strategy = "full", ft_dir, ft_out;
  nn::FinetuneOptions ft_opts;
  ft->add_option("checkpoint", ft_ckpt)->required();
  ft->add_option("--task", ft_task)->capture_default_str();
  ft->add_option("--labels", ft_labels, "JSON object: stem -> label or list of face labels")->required();
  ft->add_option("--strategy", ft_strategy)->capture_default_str();
  ft->add_option("--data-dir", ft_dir)->required();
  ft->add_option("-o,--out", ft_out, "Fine-tuned checkpoint")->required();
  ft->add_option("--steps", ft_opts.steps)->capture_default_str();
  ft->add_option("--lr", ft_opts.optimizer.lr)->capture_default_str();
  ft->add_option("--classes", ft_opts.classes)->capture_default_str();
  ft->add_option("--batch-models", ft_opts.batch_models)->capture_default_str();
  ft->add_option("--seed", ft_opts.seed)->capture_default_str();

  // verify-convergence
  auto* vc = app.add_subcommand("verify-convergence", "Fit the boundary RMSE decay rate");
  std::string vc_curve = "circle";
  int vc_levels = 6;
  int vc_base = 8;
  vc->add_option("--curve", vc_curve, "circle | ellipse")->capture_default_str();
  vc->add_option("--levels", vc_levels)->capture_default_str();
  vc->add_option("--base-segments", vc_base)->capture_default_str();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check on the toy model");
  std::uint64_t gc_seed = 0;
  int gc_samples = 50;
  double gc_tol = 1e-4;
  gc->add_option("--seed", gc_seed)->capture_default_str();
  gc->add_option("--samples", gc_samples)->capture_default_str();
  gc->add_option("--tolerance", gc_tol)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::kArgument);
  }

  const auto t0 = std::chrono::steady_clock::now();
  CLI::App* cmd = app.get_subcommands().front();
  Report rep(cmd->get_name());
  int code = 0;
  try {
    if (cmd == gen) {
      const auto kind = parse_solid_kind(gen_kind);
      if (!kind) throw ArgumentError("unknown solid kind '" + gen_kind + "'");
      rep.config() = {{"kind", gen_kind}, {"seed", gen_seed},       {"a", gen_params.a},
                      {"b", gen_params.b}, {"c", gen_params.c},     {"d", gen_params.d},
                      {"jitter", gen_params.jitter}, {"random_pose", gen_params.random_pose}};
      const BrepModel model = generate_solid(*kind, gen_params, gen_seed);
      write_model(model, gen_out);
      rep.metrics() = {{"faces", model.faces().size()}, {"edges", model.edges().size()}};
      std::cout << "generated " << gen_kind << ": " << model.faces().size() << " faces, " << model.edges().size()
                << " edges -> " << gen_out << "\n";
    } else if (cmd == dec) {
      rep.config() = {{"tau", dec_opts.tau}, {"max_depth", dec_opts.max_depth},
                      {"triangle_degree", dec_opts.triangle_degree}, {"curve_degree", dec_opts.curve_degree}};
      rep.input(dec_in);
      const BrepModel model = read_model(dec_in);
      const ModelPrimitives prims = decompose_model(model, dec_opts);
      std::size_t tris = 0, segs = 0, unconverged = 0;
      for (const auto& f : prims.faces) {
        tris += f.triangles.size();
        unconverged += f.unconverged_cells;
      }
      for (const auto& e : prims.edges) segs += e.segments.size();
      const double residual = max_decomposition_residual(model, prims);
      write_primitives(prims, dec_out);
      rep.metrics() = {{"triangles", tris},
                       {"segments", segs},
                       {"unconverged_cells", unconverged},
                       {"max_residual", residual},
                       {"faces", cells_summary(prims)}};
      if (unconverged > 0) rep.warn(std::to_string(unconverged) + " boundary cells hit the depth cap");
      std::cout << tris << " triangles, " << segs << " segments, max residual " << residual << ", " << unconverged
                << " unconverged cells -> " << dec_out << "\n";
    } else if (cmd == smp) {
      rep.config() = {{"m", smp_m}, {"face_cap", smp_caps.face}, {"edge_cap", smp_caps.edge}};
      rep.input(smp_in);
      rep.input(smp_prims);
      const BrepModel model = read_model(smp_in);
      const ModelPrimitives prims = read_primitives(smp_prims);
      const ShapeTargets t = sample_entity_points(model, prims, smp_m, smp_caps);
      write_targets(t, smp_out);
      for (const auto& w : select_primitives(prims, smp_caps).warnings) rep.warn(w);
      rep.metrics() = {{"faces", t.face_count}, {"edges", t.edge_count}, {"face_slots", t.face_slots()},
                       {"edge_slots", t.edge_slots()}};
      std::cout << t.face_count << " faces, " << t.edge_count << " edges sampled -> " << smp_out << "\n";
    } else if (cmd == tok) {
      rep.config() = {{"face_cap", tok_caps.face}, {"edge_cap", tok_caps.edge}};
      rep.input(tok_in);
      rep.input(tok_prims);
      const BrepModel model = read_model(tok_in);
      const ModelPrimitives prims = read_primitives(tok_prims);
      const TokenBatch b = tokenize_model(model, prims, tok_caps);
      write_batch(b, tok_out);
      for (const auto& w : b.warnings) rep.warn(w);
      rep.metrics() = {{"faces", b.face_total()},
                       {"edges", b.edge_total()},
                       {"face_pairs", b.face_adjacency.size()},
                       {"edge_pairs", b.edge_adjacency.size()}};
      std::cout << b.face_total() << " face tokens, " << b.edge_total() << " edge tokens -> " << tok_out << "\n";
    } else if (cmd == pre) {
      auto named = load_dataset(pre_dir, rep, true);
      std::vector<nn::Sample> data;
      for (auto& [stem, s] : named) data.push_back(std::move(s));
      nn::ModelConfig config;
      if (!pre_config.empty()) {
        rep.input(pre_config);
        config = nn::ModelConfig::from_json(read_text(pre_config));
      } else {
        config.face_cap = data.front().batch.face_cap;
        config.edge_cap = data.front().batch.edge_cap;
        config.points_per_primitive = data.front().targets.m;
      }
      if (pre_width > 0) config.width = pre_width;
      config.validate();
      rep.config() = {{"model", json::parse(config.to_json())},
                      {"steps", pre_steps},
                      {"seed", pre_seed},
                      {"lr", pre_opt.lr},
                      {"weight_decay", pre_opt.weight_decay},
                      {"samples", data.size()}};
      nn::TrainOptions opts;
      opts.optimizer = pre_opt;
      opts.steps = pre_steps;
      opts.seed = pre_seed;
      const nn::Parameters init = nn::init_parameters(config, pre_seed);
      const nn::LossValues before = nn::dataset_loss(init, data, config);
      const nn::TrainResult r = nn::train(data, config, opts, init);
      const nn::LossValues after = nn::dataset_loss(r.params, data, config);
      nn::write_checkpoint({config, r.params}, pre_out);
      const std::string trace = pre_trace.empty() ? fs::path(pre_out).replace_extension(".loss.csv").string() : pre_trace;
      nn::write_loss_trace(r.trace, trace);
      rep.metrics() = {{"parameters", r.params.scalar_count()},
                       {"dataset_loss_before", loss_json(before)},
                       {"dataset_loss_after", loss_json(after)},
                       {"trace", trace}};
      std::cout << "dataset loss " << before.total << " -> " << after.total << " over " << pre_steps << " steps; "
                << r.params.scalar_count() << " parameters -> " << pre_out << "\n";
    } else if (cmd == ft) {
      rep.input(ft_ckpt);
      rep.input(ft_labels);
      ft_opts.task = nn::parse_task(ft_task);
      ft_opts.strategy = nn::parse_strategy(ft_strategy);
      const nn::Checkpoint ck = nn::read_checkpoint(ft_ckpt);
      json labels;
      try {
        labels = json::parse(read_text(ft_labels));
      } catch (const json::exception& e) {
        throw ParseError(std::string("labels: ") + e.what());
      }
      if (!labels.is_object()) throw ParseError("labels must be a JSON object");
      std::vector<nn::LabeledModel> data;
      for (auto& [stem, s] : load_dataset(ft_dir, rep, false)) {
        if (!labels.contains(stem)) continue;
        nn::LabeledModel m{std::move(s.batch), {}};
        const json& l = labels.at(stem);
        try {
          if (l.is_array()) {
            m.labels = l.get<std::vector<int>>();
          } else {
            m.labels.push_back(l.get<int>());
          }
        } catch (const json::exception& e) {
          throw ParseError("labels for " + stem + ": " + e.what());
        }
        data.push_back(std::move(m));
      }
      if (data.size() != labels.size()) throw IntegrityError("some labeled stems have no .b2t file in the data directory");
      rep.config() = {{"task", ft_task}, {"strategy", ft_strategy}, {"steps", ft_opts.steps},
                      {"lr", ft_opts.optimizer.lr}, {"classes", ft_opts.classes},
                      {"batch_models", ft_opts.batch_models}, {"seed", ft_opts.seed}, {"models", data.size()}};
      const nn::FinetuneResult r = nn::finetune_head(ck.params, data, ck.config, ft_opts);
      nn::write_checkpoint({ck.config, r.params}, ft_out);
      rep.metrics() = {{"accuracy", r.accuracy},
                       {"loss_first", r.loss.empty() ? 0.0 : r.loss.front()},
                       {"loss_last", r.loss.empty() ? 0.0 : r.loss.back()}};
      std::cout << ft_task << " (" << ft_strategy << "): train accuracy " << r.accuracy << " -> " << ft_out << "\n";
    } else if (cmd == vc) {
      NurbsCurve curve;
      if (vc_curve == "circle") {
        curve = make_circle(0.0, 0.0, 1.0);
      } else if (vc_curve == "ellipse") {
        curve = make_ellipse(0.0, 0.0, 2.0, 1.0);
      } else {
        throw ArgumentError("unknown curve '" + vc_curve + "'");
      }
      rep.config() = {{"curve", vc_curve}, {"levels", vc_levels}, {"base_segments", vc_base}};
      const ConvergenceStudy s = boundary_convergence(curve, vc_levels, vc_base);
      rep.metrics() = {{"h", s.h}, {"rmse", s.rmse}, {"slope", s.slope}};
      for (std::size_t i = 0; i < s.h.size(); ++i) std::cout << "h " << s.h[i] << "  rmse " << s.rmse[i] << "\n";
      std::cout << "slope " << std::setprecision(6) << s.slope << "\n";
    } else if (cmd == gc) {
      rep.config() = {{"seed", gc_seed}, {"samples", gc_samples}, {"tolerance", gc_tol}, {"step", 1e-5}};
      const nn::GradcheckResult r = nn::gradcheck(gc_seed, gc_samples, 1e-5, gc_tol);
      rep.metrics() = {{"checked", r.checked}, {"max_rel_error", r.max_rel_error}, {"worst", r.worst}};
      std::cout << "checked " << r.checked << " parameters, max relative error " << r.max_rel_error << " at "
                << r.worst << (r.passed ? " (pass)" : " (FAIL)") << "\n";
      if (!r.passed) throw NumericError("gradient check failed: max relative error " + std::to_string(r.max_rel_error));
    }
  } catch (const Error& e) {
    rep.error(kind_name(e.kind()), e.what());
    std::cerr << "error: " << e.what() << "\n";
    code = e.exit_code();
  } catch (const fs::filesystem_error& e) {
    rep.error("argument", e.what());
    std::cerr << "error: " << e.what() << "\n";
    code = static_cast<int>(ErrorKind::kArgument);
  } catch (const std::exception& e) {
    rep.error("integrity", e.what());
    std::cerr << "error: " << e.what() << "\n";
    code = static_cast<int>(ErrorKind::kIntegrity);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    rep.finish(secs, code, report_path);
  } catch (const Error& e) {
    std::cerr << "error: cannot write report: " << e.what() << "\n";
    if (code == 0) code = e.exit_code();
  }
  return code;
}
