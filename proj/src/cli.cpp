#include "ctalign/cli.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "ctalign/io.hpp"
#include "ctalign/metrics.hpp"

namespace ctalign::cli {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return 3;
    case ErrorKind::kShape: return 4;
    case ErrorKind::kConfig: return 5;
    case ErrorKind::kSimplex: return 6;
    case ErrorKind::kGrid: return 7;
    case ErrorKind::kAllMasked: return 8;
    case ErrorKind::kDegenerateVector: return 9;
    case ErrorKind::kEvaluation: return 10;
    case ErrorKind::kEmptyLabelSet: return 11;
    case ErrorKind::kNumerical: return 12;
    case ErrorKind::kUndefinedMetric: return 13;
  }
  return kExitInternal;
}

namespace {

const char* theta_mode_name(ThetaMode m) { return m == ThetaMode::kSparse ? "sparse" : "binary"; }
const char* beta_mode_name(BetaMode m) { return m == BetaMode::kMasked ? "masked" : "literal"; }

// Applies one --mode value; each value names either a theta or a beta mode.
void apply_mode(const std::string& mode, EncodeOptions& opts) {
  if (mode == "sparse") opts.theta_mode = ThetaMode::kSparse;
  else if (mode == "binary") opts.theta_mode = ThetaMode::kBinary;
  else if (mode == "masked") opts.beta_mode = BetaMode::kMasked;
  else if (mode == "literal") opts.beta_mode = BetaMode::kLiteral;
  else throw ConfigError("unknown mode '" + mode + "' (expected sparse, binary, masked or literal)");
}

using Setter = std::function<void(const json&)>;

std::string where(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

Setter size_field(std::size_t& dst, std::string name) {
  return [&dst, name](const json& v) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError("'" + name + "' must be a nonnegative integer");
    }
    dst = v.get<std::size_t>();
  };
}

Setter real_field(double& dst, std::string name) {
  return [&dst, name](const json& v) {
    if (!v.is_number()) throw ConfigError("'" + name + "' must be a number");
    dst = v.get<double>();
  };
}

Setter bool_field(bool& dst, std::string name) {
  return [&dst, name](const json& v) {
    if (!v.is_boolean()) throw ConfigError("'" + name + "' must be true or false");
    dst = v.get<bool>();
  };
}

template <class T>
Setter list_field(std::vector<T>& dst, std::string name) {
  return [&dst, name](const json& v) {
    if (!v.is_array()) throw ConfigError("'" + name + "' must be an array");
    dst.clear();
    for (const auto& x : v) {
      if constexpr (std::is_same_v<T, double>) {
        if (!x.is_number()) throw ConfigError("'" + name + "' must hold numbers");
      } else {
        if (!x.is_number_integer() || x.get<long long>() < 0) {
          throw ConfigError("'" + name + "' must hold nonnegative integers");
        }
      }
      dst.push_back(x.get<T>());
    }
  };
}

void read_object(const json& obj, const std::string& section,
                 const std::map<std::string, Setter>& fields) {
  if (!obj.is_object()) throw ConfigError("'" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + where(section, key) + "'");
    it->second(value);
  }
}

}  // namespace

void RunConfig::finalize() {
  data.seed = seed;
  train.seed = seed;
  data.validate();
  model.validate();
  train.validate();
  train.loss.validate();
  if (train.loss.start_layer > model.num_layers) {
    throw ConfigError("start_layer " + std::to_string(train.loss.start_layer) +
                      " exceeds num_layers " + std::to_string(model.num_layers));
  }
  if (eval_top_k == 0) throw ConfigError("eval.top_k must be at least 1");
  if (!(sinkhorn.epsilon > 0.0) || !std::isfinite(sinkhorn.epsilon)) {
    throw ConfigError("sinkhorn epsilon must be positive");
  }
  if (sinkhorn.max_iter == 0) throw ConfigError("sinkhorn max_iter must be at least 1");
}

json to_json(const RunConfig& c) {
  return json{
      {"seed", c.seed},
      {"data",
       {{"num_labels", c.data.num_labels},
        {"input_dim", c.data.input_dim},
        {"num_patches", c.data.num_patches},
        {"train_size", c.data.train_size},
        {"test_size", c.data.test_size},
        {"noise_sigma", c.data.noise_sigma},
        {"max_labels_per_sample", c.data.max_labels_per_sample},
        {"min_object_patches", c.data.min_object_patches},
        {"max_object_patches", c.data.max_object_patches}}},
      {"model",
       {{"embed_dim", c.model.embed_dim},
        {"head_dim", c.model.head_dim},
        {"num_layers", c.model.num_layers},
        {"init_log_temperature", c.model.init_log_temperature},
        {"label_init_scale", c.model.label_init_scale},
        {"use_projection", c.model.use_projection}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"adam_eps", c.train.adam_eps},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size}}},
      {"encode",
       {{"topk", c.train.encode.topk},
        {"theta_mode", theta_mode_name(c.train.encode.theta_mode)},
        {"beta_mode", beta_mode_name(c.train.encode.beta_mode)}}},
      {"loss",
       {{"gamma_plus", c.train.loss.gamma_plus},
        {"gamma_minus", c.train.loss.gamma_minus},
        {"alpha", c.train.loss.alpha},
        {"start_layer", c.train.loss.start_layer}}},
      {"sinkhorn",
       {{"epsilon", c.sinkhorn.epsilon},
        {"max_iter", c.sinkhorn.max_iter},
        {"tol", c.sinkhorn.tol}}},
      {"eval", {{"top_k", c.eval_top_k}}},
      {"sweep",
       {{"alpha", c.sweep.alpha},
        {"start_layer", c.sweep.start_layer},
        {"topk", c.sweep.topk}}}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  auto mode_setter = [&c](const char* which) -> Setter {
    return [&c, which](const json& v) {
      if (!v.is_string()) throw ConfigError(std::string("'encode.") + which + "' must be a string");
      const std::string s = v.get<std::string>();
      const bool theta = std::string(which) == "theta_mode";
      if (theta && s != "sparse" && s != "binary") throw ConfigError("bad theta_mode '" + s + "'");
      if (!theta && s != "masked" && s != "literal") throw ConfigError("bad beta_mode '" + s + "'");
      apply_mode(s, c.train.encode);
    };
  };
  auto section = [](auto fields, const std::string& name) -> Setter {
    return [fields, name](const json& v) { read_object(v, name, fields); };
  };

  const std::map<std::string, Setter> data{
      {"num_labels", size_field(c.data.num_labels, "data.num_labels")},
      {"input_dim", size_field(c.data.input_dim, "data.input_dim")},
      {"num_patches", size_field(c.data.num_patches, "data.num_patches")},
      {"train_size", size_field(c.data.train_size, "data.train_size")},
      {"test_size", size_field(c.data.test_size, "data.test_size")},
      {"noise_sigma", real_field(c.data.noise_sigma, "data.noise_sigma")},
      {"max_labels_per_sample", size_field(c.data.max_labels_per_sample, "data.max_labels_per_sample")},
      {"min_object_patches", size_field(c.data.min_object_patches, "data.min_object_patches")},
      {"max_object_patches", size_field(c.data.max_object_patches, "data.max_object_patches")}};
  const std::map<std::string, Setter> model{
      {"embed_dim", size_field(c.model.embed_dim, "model.embed_dim")},
      {"head_dim", size_field(c.model.head_dim, "model.head_dim")},
      {"num_layers", size_field(c.model.num_layers, "model.num_layers")},
      {"init_log_temperature", real_field(c.model.init_log_temperature, "model.init_log_temperature")},
      {"label_init_scale", real_field(c.model.label_init_scale, "model.label_init_scale")},
      {"use_projection", bool_field(c.model.use_projection, "model.use_projection")}};
  const std::map<std::string, Setter> train{
      {"learning_rate", real_field(c.train.learning_rate, "train.learning_rate")},
      {"beta1", real_field(c.train.beta1, "train.beta1")},
      {"beta2", real_field(c.train.beta2, "train.beta2")},
      {"adam_eps", real_field(c.train.adam_eps, "train.adam_eps")},
      {"epochs", size_field(c.train.epochs, "train.epochs")},
      {"batch_size", size_field(c.train.batch_size, "train.batch_size")}};
  const std::map<std::string, Setter> encode{
      {"topk", size_field(c.train.encode.topk, "encode.topk")},
      {"theta_mode", mode_setter("theta_mode")},
      {"beta_mode", mode_setter("beta_mode")}};
  const std::map<std::string, Setter> loss{
      {"gamma_plus", real_field(c.train.loss.gamma_plus, "loss.gamma_plus")},
      {"gamma_minus", real_field(c.train.loss.gamma_minus, "loss.gamma_minus")},
      {"alpha", real_field(c.train.loss.alpha, "loss.alpha")},
      {"start_layer", size_field(c.train.loss.start_layer, "loss.start_layer")}};
  const std::map<std::string, Setter> sinkhorn{
      {"epsilon", real_field(c.sinkhorn.epsilon, "sinkhorn.epsilon")},
      {"max_iter", size_field(c.sinkhorn.max_iter, "sinkhorn.max_iter")},
      {"tol", real_field(c.sinkhorn.tol, "sinkhorn.tol")}};
  const std::map<std::string, Setter> eval{
      {"top_k", size_field(c.eval_top_k, "eval.top_k")}};
  const std::map<std::string, Setter> sweep{
      {"alpha", list_field(c.sweep.alpha, "sweep.alpha")},
      {"start_layer", list_field(c.sweep.start_layer, "sweep.start_layer")},
      {"topk", list_field(c.sweep.topk, "sweep.topk")}};

  std::uint64_t seed = c.seed;
  const std::map<std::string, Setter> top{
      {"seed",
       [&seed](const json& v) {
         if (!v.is_number_integer() || v.get<long long>() < 0) {
           throw ConfigError("'seed' must be a nonnegative integer");
         }
         seed = v.get<std::uint64_t>();
       }},
      {"data", section(data, "data")},
      {"model", section(model, "model")},
      {"train", section(train, "train")},
      {"encode", section(encode, "encode")},
      {"loss", section(loss, "loss")},
      {"sinkhorn", section(sinkhorn, "sinkhorn")},
      {"eval", section(eval, "eval")},
      {"sweep", section(sweep, "sweep")},
      // Written by every run for replay; ignored on load.
      {"invocation", [](const json&) {}}};
  read_object(j, "", top);
  c.seed = seed;
  return c;
}

namespace {

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::vector<std::string> args;
};

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  const std::string text = io::read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) line += text[i] == '\n';
    throw ParseError(std::string("config ") + path + ": " + e.what(), line);
  }
  return run_config_from_json(j);
}

void write_effective_config(const fs::path& out_dir, const RunConfig& cfg,
                            const std::string& subcommand, const Context& ctx) {
  json j = to_json(cfg);
  j["invocation"] = {{"subcommand", subcommand}, {"args", ctx.args}};
  io::write_text(out_dir / "effective_config.json", j.dump(2) + "\n");
}

std::string fmt(double v) { return io::format_fixed6(v); }

std::string compact(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

struct RunOutcome {
  TrainResult result;
  std::vector<MetricsReport> reports;
  LocalizationSummary localization;
};

std::vector<MetricsReport> evaluate(const ToyModelParams& params,
                                    std::span<const SyntheticSample> samples,
                                    std::size_t top_k) {
  const Matrix scores = score_matrix(params, samples);
  const Matrix labels = label_matrix(samples);
  return {prf_suite(scores, labels, Regime::threshold_at(0.5)),
          prf_suite(scores, labels, Regime::top_k(top_k))};
}

json checkpoint_json(const RunConfig& cfg, const TrainResult& res) {
  json meta{{"optimizer", "adam"},
            {"epochs_run", res.trace.size()},
            {"temperature", res.params.navigator.temperature()},
            {"desk_scale_deviations",
             {"adam with learning rate 1e-3 instead of adamw at 1e-5",
              "batch size and epoch count set for a synthetic task",
              "orthogonal per-layer label transforms"}}};
  if (!res.trace.empty()) {
    meta["final_total_loss"] = res.trace.back().total;
  }
  return json{{"format", "ctalign-checkpoint"},
              {"version", 1},
              {"config", to_json(cfg)},
              {"metadata", meta},
              {"params", io::params_to_json(res.params)}};
}

struct Checkpoint {
  RunConfig config;
  ToyModelParams params;
};

Checkpoint load_checkpoint(const std::string& path) {
  const std::string text = io::read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) line += text[i] == '\n';
    throw ParseError(std::string("checkpoint ") + path + ": " + e.what(), line);
  }
  if (!j.is_object() || j.value("format", "") != "ctalign-checkpoint") {
    throw ParseError("checkpoint " + path + ": not a ctalign checkpoint", 1);
  }
  if (!j.contains("config") || !j.contains("params")) {
    throw ParseError("checkpoint " + path + ": missing config or params", 1);
  }
  Checkpoint c{run_config_from_json(j.at("config")), io::params_from_json(j.at("params"))};
  c.config.finalize();
  return c;
}

std::vector<SyntheticSample> load_samples(const std::string& dataset_path, const RunConfig& cfg) {
  if (dataset_path.empty()) return generate_splits(cfg.data).test;
  const std::string text = io::read_text(dataset_path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("dataset ") + dataset_path + ": " + e.what(), 0);
  }
  return io::dataset_from_json(j.contains("samples") ? j.at("samples") : j);
}

void print_table(std::ostream& out, const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  out << std::left << std::setw(14) << "run" << std::setw(8) << "regime";
  for (const char* h : {"mAP", "CP", "CR", "CF1", "OP", "OR", "OF1"}) out << std::setw(10) << h;
  out << '\n';
  for (const auto& [label, r] : rows) {
    out << std::setw(14) << label << std::setw(8) << r.regime.name();
    for (double v : {r.map, r.cp, r.cr, r.cf1, r.op, r.orc, r.of1}) out << std::setw(10) << fmt(v);
    out << '\n';
  }
  out << std::right;
}

RunOutcome train_and_evaluate(const RunConfig& cfg, const DatasetSplits& splits) {
  ToyModelParams init = init_params(cfg.model, cfg.data.input_dim, cfg.data.num_labels, cfg.seed);
  RunOutcome o;
  o.result = train(std::move(init), splits.train, cfg.train, splits.test);
  o.reports = evaluate(o.result.params, splits.test, cfg.eval_top_k);
  o.localization = localization_summary(o.result.params, splits.test, cfg.train.encode);
  return o;
}

void write_run_artifacts(const fs::path& dir, const RunConfig& cfg, const RunOutcome& o,
                         const std::string& label) {
  io::write_text(dir / "checkpoint.json", checkpoint_json(cfg, o.result).dump(2) + "\n");
  io::write_text(dir / "trace.csv", io::trace_to_csv(o.result.trace));
  std::string metrics = io::metrics_csv_header();
  for (const auto& r : o.reports) metrics += io::metrics_csv_row(label, r);
  io::write_text(dir / "metrics.csv", metrics);
}

std::string run_label(double alpha) { return alpha == 0.0 ? "w/o CT" : "alpha=" + compact(alpha); }

// Flags shared by the experiment subcommands.
struct ExperimentFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> start_layer;
  std::optional<std::size_t> topk;
  std::vector<std::string> modes;
};

void apply_flags(const ExperimentFlags& f, RunConfig& cfg) {
  if (f.seed) cfg.seed = *f.seed;
  if (f.alpha) cfg.train.loss.alpha = *f.alpha;
  if (f.start_layer) cfg.train.loss.start_layer = *f.start_layer;
  if (f.topk) cfg.train.encode.topk = *f.topk;
  for (const auto& m : f.modes) apply_mode(m, cfg.train.encode);
}

int cmd_distance(const Context& ctx, const std::string& p_file, const std::string& q_file,
                 const std::string& out_dir, const std::string& config_path,
                 std::optional<std::uint64_t> seed, std::optional<double> epsilon,
                 double temperature, bool write_plans) {
  RunConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (epsilon) cfg.sinkhorn.epsilon = *epsilon;
  cfg.finalize();
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be positive and finite");
  }
  write_effective_config(out_dir, cfg, "distance", ctx);

  const io::LoadedPointSet p = io::read_point_set(p_file);
  const io::LoadedPointSet q = io::read_point_set(q_file);
  if (p.set.dim() != q.set.dim()) {
    throw ShapeError("embedding dimensions differ: " + std::to_string(p.set.dim()) + " vs " +
                     std::to_string(q.set.dim()));
  }
  if (p.weights_defaulted) ctx.out << "note: " << p_file << " has no weights, uniform assumed\n";
  if (q.weights_defaulted) ctx.out << "note: " << q_file << " has no weights, uniform assumed\n";

  const NavigatorParams nav = NavigatorParams::with_temperature(temperature);
  const CtResult ct = ct_distance(p.set, q.set, nav);
  const CostMatrix cost = cost_matrix(p.set.support(), q.set.support());
  const SinkhornResult ot = sinkhorn_ot(p.set.weights(), q.set.weights(), cost, cfg.sinkhorn);

  ctx.out << "ct_total " << fmt(ct.total) << '\n'
          << "ct_forward " << fmt(ct.forward_cost) << '\n'
          << "ct_backward " << fmt(ct.backward_cost) << '\n'
          << "ot_cost " << fmt(ot.cost) << " (epsilon " << compact(cfg.sinkhorn.epsilon)
          << ", " << (ot.converged ? "converged" : "not converged") << " after "
          << ot.iterations << " iterations, marginal violation " << std::scientific
          << std::setprecision(3) << ot.marginal_violation << std::defaultfloat << ")\n";

  std::string report = "quantity,value\n";
  report += "ct_total," + fmt(ct.total) + "\n";
  report += "ct_forward," + fmt(ct.forward_cost) + "\n";
  report += "ct_backward," + fmt(ct.backward_cost) + "\n";
  report += "ot_cost," + fmt(ot.cost) + "\n";
  report += "ot_marginal_violation," + fmt(ot.marginal_violation) + "\n";
  io::write_text(fs::path(out_dir) / "distance.csv", report);
  if (write_plans) {
    io::write_text(fs::path(out_dir) / "forward_plan.csv", io::matrix_to_csv(ct.forward.coupling));
    io::write_text(fs::path(out_dir) / "backward_plan.csv", io::matrix_to_csv(ct.backward.coupling));
    io::write_text(fs::path(out_dir) / "ot_plan.csv", io::matrix_to_csv(ot.plan));
  }
  return kExitOk;
}

int cmd_train(const Context& ctx, const ExperimentFlags& flags, const std::string& out_dir) {
  RunConfig cfg = load_config(flags.config_path);
  apply_flags(flags, cfg);
  cfg.finalize();
  write_effective_config(out_dir, cfg, "train", ctx);

  const DatasetSplits splits = generate_splits(cfg.data);
  const RunOutcome o = train_and_evaluate(cfg, splits);
  const std::string label = run_label(cfg.train.loss.alpha);
  write_run_artifacts(out_dir, cfg, o, label);
  io::write_text(fs::path(out_dir) / "test_set.json",
                 json{{"samples", io::dataset_to_json(splits.test)}}.dump() + "\n");

  for (const auto& r : o.result.trace) {
    ctx.out << "epoch " << r.epoch << " total " << fmt(r.total) << " lct " << fmt(r.lct)
            << " asl " << fmt(r.asl) << " val_mAP " << fmt(r.val_map) << '\n';
  }
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& r : o.reports) rows.emplace_back(label, r);
  print_table(ctx.out, rows);
  ctx.out << "localization " << o.localization.localized << "/"
          << o.localization.correctly_classified << " = " << fmt(o.localization.rate()) << '\n';
  return kExitOk;
}

int cmd_eval(const Context& ctx, const std::string& checkpoint, const std::string& dataset,
             const std::string& out_dir, std::optional<std::size_t> topk,
             const std::vector<std::string>& modes) {
  Checkpoint ck = load_checkpoint(checkpoint);
  if (topk) ck.config.train.encode.topk = *topk;
  for (const auto& m : modes) apply_mode(m, ck.config.train.encode);
  ck.config.finalize();
  write_effective_config(out_dir, ck.config, "eval", ctx);

  const std::vector<SyntheticSample> samples = load_samples(dataset, ck.config);
  if (samples.empty()) throw UndefinedMetricError("evaluation set is empty");
  const auto reports = evaluate(ck.params, samples, ck.config.eval_top_k);
  const auto loc = localization_summary(ck.params, samples, ck.config.train.encode);
  const std::string label = run_label(ck.config.train.loss.alpha);

  std::string metrics = io::metrics_csv_header();
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& r : reports) {
    metrics += io::metrics_csv_row(label, r);
    rows.emplace_back(label, r);
  }
  io::write_text(fs::path(out_dir) / "metrics.csv", metrics);
  io::write_text(fs::path(out_dir) / "localization.csv",
                 "correctly_classified,localized,rate\n" +
                     std::to_string(loc.correctly_classified) + "," +
                     std::to_string(loc.localized) + "," + fmt(loc.rate()) + "\n");
  print_table(ctx.out, rows);
  ctx.out << "localization " << loc.localized << "/" << loc.correctly_classified << " = "
          << fmt(loc.rate()) << '\n';
  return kExitOk;
}

int cmd_export_plan(const Context& ctx, const std::string& checkpoint, const std::string& dataset,
                    const std::string& out_dir, std::size_t sample_index, std::size_t label_index,
                    std::size_t target_size) {
  Checkpoint ck = load_checkpoint(checkpoint);
  write_effective_config(out_dir, ck.config, "export-plan", ctx);
  const std::vector<SyntheticSample> samples = load_samples(dataset, ck.config);
  if (sample_index >= samples.size()) {
    throw ConfigError("sample " + std::to_string(sample_index) + " out of range (" +
                      std::to_string(samples.size()) + " samples)");
  }
  const SyntheticSample& s = samples[sample_index];
  if (label_index >= s.y.size()) {
    throw ConfigError("label " + std::to_string(label_index) + " out of range (" +
                      std::to_string(s.y.size()) + " labels)");
  }
  if (!s.y[label_index]) {
    ctx.err << "warning: label " << label_index << " is not in sample " << sample_index
            << "'s ground truth; exporting anyway\n";
  }
  const TransportPlan plan = final_backward_plan(ck.params, s, ck.config.train.encode);
  const std::vector<double> column = plan.coupling.column(label_index);
  const Matrix grid = export_plan_grid(column, target_size);
  io::write_text(fs::path(out_dir) / "plan_grid.csv", io::matrix_to_csv(grid));

  const auto best = std::max_element(column.begin(), column.end());
  const auto patch = static_cast<std::size_t>(best - column.begin());
  ctx.out << "grid " << grid.rows() << "x" << grid.cols() << " written to "
          << (fs::path(out_dir) / "plan_grid.csv").string() << '\n'
          << "argmax patch " << patch << " ("
          << (s.assignment[patch] == static_cast<int>(label_index) ? "on" : "off")
          << " a ground-truth object patch)\n";
  return kExitOk;
}

template <class T>
void check_unique(const std::vector<T>& v, const char* name) {
  std::set<T> seen(v.begin(), v.end());
  if (seen.size() != v.size()) throw ConfigError(std::string("sweep grid '") + name + "' repeats a value");
}

int cmd_sweep(const Context& ctx, const ExperimentFlags& flags, const std::string& out_dir,
              const std::vector<double>& alphas, const std::vector<std::size_t>& layers,
              const std::vector<std::size_t>& topks) {
  RunConfig cfg = load_config(flags.config_path);
  apply_flags(flags, cfg);
  if (!alphas.empty()) cfg.sweep.alpha = alphas;
  if (!layers.empty()) cfg.sweep.start_layer = layers;
  if (!topks.empty()) cfg.sweep.topk = topks;
  if (cfg.sweep.alpha.empty()) cfg.sweep.alpha = {cfg.train.loss.alpha};
  if (cfg.sweep.start_layer.empty()) cfg.sweep.start_layer = {cfg.train.loss.start_layer};
  if (cfg.sweep.topk.empty()) cfg.sweep.topk = {cfg.train.encode.topk};
  for (double a : cfg.sweep.alpha) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("sweep alpha values must be finite and >= 0");
  }
  for (std::size_t l : cfg.sweep.start_layer) {
    if (l < 1 || l > cfg.model.num_layers) {
      throw ConfigError("sweep start_layer " + std::to_string(l) + " outside [1, " +
                        std::to_string(cfg.model.num_layers) + "]");
    }
  }
  for (std::size_t k : cfg.sweep.topk) {
    if (k == 0) throw ConfigError("sweep topk values must be >= 1");
  }
  check_unique(cfg.sweep.alpha, "alpha");
  check_unique(cfg.sweep.start_layer, "start_layer");
  check_unique(cfg.sweep.topk, "topk");
  cfg.finalize();
  write_effective_config(out_dir, cfg, "sweep", ctx);

  const DatasetSplits splits = generate_splits(cfg.data);
  std::string summary = "run,alpha,start_layer,topk,regime,mAP,CP,CR,CF1,OP,OR,OF1,localization\n";
  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::size_t index = 0;
  for (double a : cfg.sweep.alpha) {
    for (std::size_t l : cfg.sweep.start_layer) {
      for (std::size_t k : cfg.sweep.topk) {
        RunConfig point = cfg;
        point.train.loss.alpha = a;
        point.train.loss.start_layer = l;
        point.train.encode.topk = k;
        point.sweep = {};
        std::string label = run_label(a);
        if (cfg.sweep.start_layer.size() > 1) label += " ls=" + std::to_string(l);
        if (cfg.sweep.topk.size() > 1) label += " k=" + std::to_string(k);

        const RunOutcome o = train_and_evaluate(point, splits);
        const fs::path dir = fs::path(out_dir) / ("point_" + std::to_string(index++));
        write_effective_config(dir, point, "sweep", ctx);
        write_run_artifacts(dir, point, o, label);
        for (const auto& r : o.reports) {
          summary += label + ',' + fmt(a) + ',' + std::to_string(l) + ',' + std::to_string(k) +
                     ',' + r.regime.name() + ',' + fmt(r.map) + ',' + fmt(r.cp) + ',' +
                     fmt(r.cr) + ',' + fmt(r.cf1) + ',' + fmt(r.op) + ',' + fmt(r.orc) + ',' +
                     fmt(r.of1) + ',' + fmt(o.localization.rate()) + '\n';
          rows.emplace_back(label, r);
        }
      }
    }
  }
  io::write_text(fs::path(out_dir) / "sweep.csv", summary);
  print_table(ctx.out, rows);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx{out, err, args};
  CLI::App app{"ctalign: conditional-transport alignment toolkit"};
  app.require_subcommand(1);

  // distance
  std::string p_file, q_file, d_out = "ctalign-out", d_config;
  std::optional<std::uint64_t> d_seed;
  std::optional<double> d_eps;
  double d_temp = 1.0;
  bool d_plans = false;
  auto* distance = app.add_subcommand("distance", "CT and Sinkhorn OT between two embedding files");
  distance->add_option("p_file", p_file, "patch-side embedding JSON")->required();
  distance->add_option("q_file", q_file, "label-side embedding JSON")->required();
  distance->add_option("--out", d_out, "output directory");
  distance->add_option("--config", d_config, "JSON config");
  distance->add_option("--seed", d_seed, "seed");
  distance->add_option("--epsilon", d_eps, "Sinkhorn entropic regularisation");
  distance->add_option("--temperature", d_temp, "navigator temperature");
  distance->add_flag("--plans", d_plans, "write forward, backward and OT plans as CSV");

  // train / sweep share the experiment flags
  ExperimentFlags t_flags, s_flags;
  std::string t_out = "ctalign-out", s_out = "ctalign-out";
  auto add_experiment = [](CLI::App* cmd, ExperimentFlags& f, std::string& out_dir, bool scalar_grid) {
    cmd->add_option("--config", f.config_path, "JSON config");
    cmd->add_option("--seed", f.seed, "seed for data, init and shuffling");
    cmd->add_option("--out", out_dir, "output directory");
    if (scalar_grid) {
      cmd->add_option("--alpha", f.alpha, "LCT weight");
      cmd->add_option("--start-layer", f.start_layer, "first layer included in LCT (1-based)");
      cmd->add_option("--topk", f.topk, "patches kept in theta");
    }
    cmd->add_option("--mode", f.modes, "sparse|binary (theta), masked|literal (beta)");
  };
  auto* train_cmd = app.add_subcommand("train", "train on the synthetic task");
  add_experiment(train_cmd, t_flags, t_out, true);

  std::vector<double> s_alpha;
  std::vector<std::size_t> s_layers, s_topk;
  auto* sweep = app.add_subcommand("sweep", "train over a grid of alpha, start layer and top-k");
  add_experiment(sweep, s_flags, s_out, false);
  sweep->add_option("--alpha", s_alpha, "alpha grid, comma separated")->delimiter(',');
  sweep->add_option("--start-layer", s_layers, "start-layer grid, comma separated")->delimiter(',');
  sweep->add_option("--topk", s_topk, "top-k grid, comma separated")->delimiter(',');

  // eval
  std::string e_ck, e_data, e_out = "ctalign-out";
  std::optional<std::size_t> e_topk;
  std::vector<std::string> e_modes;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", e_ck, "checkpoint JSON")->required();
  eval->add_option("--dataset", e_data, "dataset JSON (default: regenerate the test split)");
  eval->add_option("--out", e_out, "output directory");
  eval->add_option("--topk", e_topk, "patches kept in theta");
  eval->add_option("--mode", e_modes, "sparse|binary, masked|literal");

  // export-plan
  std::string x_ck, x_data, x_out = "ctalign-out";
  std::size_t x_sample = 0, x_label = 0, x_size = 32;
  auto* exp = app.add_subcommand("export-plan", "export a backward plan column as a grid");
  exp->add_option("--checkpoint", x_ck, "checkpoint JSON")->required();
  exp->add_option("--dataset", x_data, "dataset JSON (default: regenerate the test split)");
  exp->add_option("--out", x_out, "output directory");
  exp->add_option("--sample", x_sample, "sample index");
  exp->add_option("--label", x_label, "label index")->required();
  exp->add_option("--size", x_size, "output grid side");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*distance) return cmd_distance(ctx, p_file, q_file, d_out, d_config, d_seed, d_eps, d_temp, d_plans);
    if (*train_cmd) return cmd_train(ctx, t_flags, t_out);
    if (*sweep) return cmd_sweep(ctx, s_flags, s_out, s_alpha, s_layers, s_topk);
    if (*eval) return cmd_eval(ctx, e_ck, e_data, e_out, e_topk, e_modes);
    if (*exp) return cmd_export_plan(ctx, x_ck, x_data, x_out, x_sample, x_label, x_size);
  } catch (const Error& e) {
    err << "error (" << error_kind_name(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace ctalign::cli
