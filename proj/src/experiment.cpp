#include "ctxbnn/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "ctxbnn/csv.hpp"
#include "ctxbnn/errors.hpp"
#include "ctxbnn/rng.hpp"
#include "json.hpp"

namespace ctxbnn::experiment {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// --- config (de)serialization ---

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + ": expected a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.count(item.key())) throw UsageError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& field, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(where + "." + key + ": " + e.what());
  }
}

void read_train(const json& j, mlp::TrainConfig& tc, const std::string& where) {
  check_keys(j, {"learning_rate", "epochs", "batch_size", "init_scale"}, where);
  read_key(j, "learning_rate", tc.learning_rate, where);
  read_key(j, "epochs", tc.epochs, where);
  read_key(j, "batch_size", tc.batch_size, where);
  read_key(j, "init_scale", tc.init_scale, where);
}

json train_json(const mlp::TrainConfig& tc) {
  return {{"learning_rate", tc.learning_rate},
          {"epochs", tc.epochs},
          {"batch_size", tc.batch_size},
          {"init_scale", tc.init_scale}};
}

void read_hmc(const json& j, bayes::HmcConfig& hc, const std::string& where) {
  check_keys(j, {"step_size", "leapfrog_steps", "samples", "burn_in", "thinning", "adapt"}, where);
  read_key(j, "step_size", hc.step_size, where);
  read_key(j, "leapfrog_steps", hc.leapfrog_steps, where);
  read_key(j, "samples", hc.samples, where);
  read_key(j, "burn_in", hc.burn_in, where);
  read_key(j, "thinning", hc.thinning, where);
  read_key(j, "adapt", hc.adapt, where);
}

json hmc_json(const bayes::HmcConfig& hc) {
  return {{"step_size", hc.step_size}, {"leapfrog_steps", hc.leapfrog_steps},
          {"samples", hc.samples},     {"burn_in", hc.burn_in},
          {"thinning", hc.thinning},   {"adapt", hc.adapt}};
}

Task parse_task(const std::string& s) {
  if (s == "kcbs") return Task::Kcbs;
  if (s == "rhombus") return Task::Rhombus;
  throw UsageError("unknown task '" + s + "' (expected kcbs or rhombus)");
}

ModelKind parse_model(const std::string& s) {
  if (s == "nn") return ModelKind::Nn;
  if (s == "bnn") return ModelKind::Bnn;
  if (s == "both") return ModelKind::Both;
  throw UsageError("unknown model '" + s + "' (expected nn, bnn or both)");
}

bool wants_nn(const ExperimentConfig& cfg) { return cfg.model != ModelKind::Bnn; }
bool wants_bnn(const ExperimentConfig& cfg) { return cfg.model != ModelKind::Nn; }

// --- shared pieces of the commands ---

void emit(const MetricsSink& sink, CommandResult& result, const Metrics& m) {
  result.metrics.push_back(m);
  if (sink) sink(m);
}

std::string fmt(double v) { return csv::format_real(v); }

json meta_json(const dataset::LabeledDataset& ds) {
  json params = json::object();
  for (const auto& [k, v] : ds.meta().params) params[k] = v;
  return {{"task", ds.meta().task},
          {"seed", ds.meta().seed},
          {"n", ds.size()},
          {"dim", ds.dim()},
          {"classes", ds.classes()},
          {"class_counts", ds.class_counts()},
          {"params", params}};
}

// Models behind the histogram and calibration outputs.
struct SingleRun {
  TaskData data;
  std::optional<NnRun> nn;
  std::optional<BnnRun> bnn;
};

SingleRun single_run(const ExperimentConfig& cfg, const MetricsSink& sink, CommandResult& result,
                     bool nn, bool bnn) {
  SingleRun run{task_data(cfg), {}, {}};
  const auto arch = architecture(cfg, cfg.layers);
  if (nn) {
    run.nn = run_nn(cfg, arch, run.data.train, run.data.test, cfg.train,
                    stream_seed(cfg.seed, Stream::NnInit));
    emit(sink, result, run.nn->metrics);
  }
  if (bnn) {
    run.bnn = run_bnn(cfg, arch, run.data.train, run.data.test, cfg.prior, cfg.hmc,
                      cfg.train.init_scale, stream_seed(cfg.seed, Stream::Hmc));
    emit(sink, result, run.bnn->metrics);
  }
  return run;
}

void write_nn_files(const ExperimentConfig& cfg, const SingleRun& run, CommandResult& result) {
  std::ostringstream ckpt;
  mlp::write_checkpoint(ckpt, run.nn->params, stream_seed(cfg.seed, Stream::NnInit));
  const auto ckpt_path = cfg.out_dir / "nn.ckpt";
  csv::write_text(ckpt_path, ckpt.str());
  const auto pred_path = cfg.out_dir / "predictions_nn.csv";
  write_predictions(pred_path, run.nn->outputs, run.data.test.labels());
  result.files.push_back(ckpt_path);
  result.files.push_back(pred_path);
}

void write_bnn_files(const ExperimentConfig& cfg, const SingleRun& run, CommandResult& result) {
  std::ostringstream ens;
  bayes::HmcConfig hc = cfg.hmc;
  hc.seed = stream_seed(cfg.seed, Stream::Hmc);
  bayes::write_ensemble(ens, run.bnn->ensemble, cfg.prior, hc);
  const auto ens_path = cfg.out_dir / "bnn_ensemble.txt";
  csv::write_text(ens_path, ens.str());
  const auto pred_path = cfg.out_dir / "predictions_bnn.csv";
  write_predictions(pred_path, run.bnn->outputs, run.data.test.labels());
  result.files.push_back(ens_path);
  result.files.push_back(pred_path);
}

void write_histogram_files(const ExperimentConfig& cfg, const SingleRun& run,
                           CommandResult& result) {
  const auto& labels = run.data.test.labels();
  if (run.nn) {
    const auto path = cfg.out_dir / "histograms_nn.csv";
    write_histograms(path, run.nn->outputs, labels, cfg.histogram_bins);
    result.files.push_back(path);
  }
  if (run.bnn) {
    const auto path = cfg.out_dir / "histograms_bnn.csv";
    write_histograms(path, run.bnn->outputs, labels, cfg.histogram_bins);
    result.files.push_back(path);
  }
}

void write_calibration_files(const ExperimentConfig& cfg, const SingleRun& run,
                             CommandResult& result) {
  const auto& labels = run.data.test.labels();
  const auto alphas = uncertainty::alpha_grid(cfg.alpha_points);
  auto one = [&](const std::vector<uncertainty::PredictiveOutput>& outs,
                 uncertainty::Component c, const char* name) {
    const auto path = cfg.out_dir / name;
    write_calibration(path, uncertainty::misclassification_curve(outs, labels, alphas, c));
    result.files.push_back(path);
  };
  if (run.nn) one(run.nn->outputs, uncertainty::Component::Total, "calibration_nn_total.csv");
  if (run.bnn) {
    one(run.bnn->outputs, uncertainty::Component::Total, "calibration_bnn_total.csv");
    one(run.bnn->outputs, uncertainty::Component::Epistemic, "calibration_bnn_epistemic.csv");
  }
}

dataset::LabeledDataset rhombus_grid(std::size_t resolution) {
  dataset::LabeledDataset grid(2, 2, {"rhombus-grid", 0, {{"resolution", std::to_string(resolution)}}});
  grid.reserve(resolution * resolution);
  const double step = 2.0 / static_cast<double>(resolution);
  for (std::size_t iy = 0; iy < resolution; ++iy) {
    for (std::size_t ix = 0; ix < resolution; ++ix) {
      const double x[2] = {-1.0 + (static_cast<double>(ix) + 0.5) * step,
                           -1.0 + (static_cast<double>(iy) + 0.5) * step};
      grid.push_back(x, dataset::rhombus_label(x[0], x[1]));
    }
  }
  return grid;
}

}  // namespace

std::string to_string(Task t) { return t == Task::Kcbs ? "kcbs" : "rhombus"; }

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::Nn: return "nn";
    case ModelKind::Bnn: return "bnn";
    case ModelKind::Both: return "both";
  }
  return "both";
}

ExperimentConfig::ExperimentConfig() {
  train.learning_rate = 0.05;
  train.epochs = 500;
  train.batch_size = 32;
  train.init_scale = 1.0;

  // Single runs keep the library HMC defaults; the sweep uses a shorter chain.
  sweep_hmc.step_size = 0.01;
  sweep_hmc.leapfrog_steps = 20;
  sweep_hmc.samples = 100;
  sweep_hmc.burn_in = 400;
  sweep_hmc.thinning = 2;

  rhombus.train.learning_rate = 0.05;
  rhombus.train.epochs = 500;
  rhombus.train.batch_size = 32;
  rhombus.hmc.burn_in = 1000;
}

void ExperimentConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw UsageError(std::string(name) + " must be positive");
  };
  positive(train_size, "train_size");
  positive(test_size, "test_size");
  positive(repeats, "repeats");
  positive(histogram_bins, "histogram_bins");
  if (alpha_points < 2) throw UsageError("alpha_points must be at least 2");
  if (train_sizes.empty()) throw UsageError("train_sizes must not be empty");
  for (auto n : train_sizes) positive(n, "every training size");
  if (sweep_layers.empty()) throw UsageError("sweep_layers must not be empty");
  for (const auto& l : sweep_layers) architecture(*this, l).validate();
  architecture(*this, layers).validate();
  mlp::Architecture{2, rhombus.layers, activation}.validate();
  if (rhombus.layers.back() != 2) throw UsageError("rhombus output layer must have 2 units");
  positive(rhombus.train_size, "rhombus.train_size");
  positive(rhombus.grid_resolution, "rhombus.grid_resolution");
  if (!(rhombus.bias_ratio > 0.0)) throw UsageError("rhombus.bias_ratio must be positive");
  if (contextual_fraction && !(*contextual_fraction > 0.0 && *contextual_fraction < 1.0)) {
    throw UsageError("contextual_fraction must lie in (0, 1)");
  }
  for (const auto* pv : {&prior.variance, &rhombus.prior.variance}) {
    if (!(*pv > 0.0)) throw UsageError("prior variance must be positive");
  }
  for (const auto* tc : {&train, &rhombus.train}) {
    if (!(tc->learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
    positive(tc->batch_size, "batch_size");
  }
  hmc.validate();
  sweep_hmc.validate();
  rhombus.hmc.validate();
  if (out_dir.empty()) throw UsageError("out_dir must not be empty");
}

ExperimentConfig parse_config(std::string_view json_text, const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw UsageError(source + ": " + e.what());
  }
  ExperimentConfig cfg;
  check_keys(j,
             {"task", "model", "layers", "sweep_layers", "train_sizes", "train_size", "test_size",
              "repeats", "contextual_fraction", "activation", "prior_variance", "train", "hmc",
              "sweep_hmc", "rhombus", "histogram_bins", "alpha_points", "seed", "out_dir"},
             source);
  std::string s;
  if (j.contains("task")) {
    read_key(j, "task", s, source);
    cfg.task = parse_task(s);
  }
  if (j.contains("model")) {
    read_key(j, "model", s, source);
    cfg.model = parse_model(s);
  }
  if (j.contains("activation")) {
    read_key(j, "activation", s, source);
    try {
      cfg.activation = mlp::parse_activation(s);
    } catch (const std::exception& e) {
      throw UsageError(source + ": " + e.what());
    }
  }
  read_key(j, "layers", cfg.layers, source);
  read_key(j, "sweep_layers", cfg.sweep_layers, source);
  read_key(j, "train_sizes", cfg.train_sizes, source);
  read_key(j, "train_size", cfg.train_size, source);
  read_key(j, "test_size", cfg.test_size, source);
  read_key(j, "repeats", cfg.repeats, source);
  if (j.contains("contextual_fraction")) {
    if (j["contextual_fraction"].is_null()) {
      cfg.contextual_fraction.reset();
    } else {
      double f = 0.0;
      read_key(j, "contextual_fraction", f, source);
      cfg.contextual_fraction = f;
    }
  }
  read_key(j, "prior_variance", cfg.prior.variance, source);
  if (j.contains("train")) read_train(j["train"], cfg.train, source + ".train");
  if (j.contains("hmc")) read_hmc(j["hmc"], cfg.hmc, source + ".hmc");
  if (j.contains("sweep_hmc")) read_hmc(j["sweep_hmc"], cfg.sweep_hmc, source + ".sweep_hmc");
  if (j.contains("rhombus")) {
    const auto& r = j["rhombus"];
    const std::string where = source + ".rhombus";
    check_keys(r,
               {"layers", "train_size", "grid_resolution", "bias_ratio", "prior_variance", "hmc",
                "train"},
               where);
    read_key(r, "layers", cfg.rhombus.layers, where);
    read_key(r, "train_size", cfg.rhombus.train_size, where);
    read_key(r, "grid_resolution", cfg.rhombus.grid_resolution, where);
    read_key(r, "bias_ratio", cfg.rhombus.bias_ratio, where);
    read_key(r, "prior_variance", cfg.rhombus.prior.variance, where);
    if (r.contains("hmc")) read_hmc(r["hmc"], cfg.rhombus.hmc, where + ".hmc");
    if (r.contains("train")) read_train(r["train"], cfg.rhombus.train, where + ".train");
  }
  read_key(j, "histogram_bins", cfg.histogram_bins, source);
  read_key(j, "alpha_points", cfg.alpha_points, source);
  read_key(j, "seed", cfg.seed, source);
  if (j.contains("out_dir")) {
    read_key(j, "out_dir", s, source);
    cfg.out_dir = s;
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  return parse_config(csv::read_text(path), path.string());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["task"] = to_string(cfg.task);
  j["model"] = to_string(cfg.model);
  j["layers"] = cfg.layers;
  j["sweep_layers"] = cfg.sweep_layers;
  j["train_sizes"] = cfg.train_sizes;
  j["train_size"] = cfg.train_size;
  j["test_size"] = cfg.test_size;
  j["repeats"] = cfg.repeats;
  j["contextual_fraction"] =
      cfg.contextual_fraction ? json(*cfg.contextual_fraction) : json(nullptr);
  j["activation"] = mlp::to_string(cfg.activation);
  j["prior_variance"] = cfg.prior.variance;
  j["train"] = train_json(cfg.train);
  j["hmc"] = hmc_json(cfg.hmc);
  j["sweep_hmc"] = hmc_json(cfg.sweep_hmc);
  j["rhombus"] = {{"layers", cfg.rhombus.layers},
                  {"train_size", cfg.rhombus.train_size},
                  {"grid_resolution", cfg.rhombus.grid_resolution},
                  {"bias_ratio", cfg.rhombus.bias_ratio},
                  {"prior_variance", cfg.rhombus.prior.variance},
                  {"hmc", hmc_json(cfg.rhombus.hmc)},
                  {"train", train_json(cfg.rhombus.train)}};
  j["histogram_bins"] = cfg.histogram_bins;
  j["alpha_points"] = cfg.alpha_points;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir.string();
  // Not read back; states the units used by the emitted files.
  j["units"] = {{"uncertainty", "nats"},
                {"histograms", "nats, fixed bins over [0, ln C]"},
                {"calibration", "normalized entropy H / ln C"}};
  return j.dump(2) + "\n";
}

std::string to_json_line(const Metrics& m) {
  json j = {{"task", m.task},          {"arch", m.arch},         {"n_train", m.n_train},
            {"model", m.model},        {"accuracy", m.accuracy}, {"acceptance_rate", nullptr},
            {"wall_ms", m.wall_ms}};
  if (m.acceptance_rate) j["acceptance_rate"] = *m.acceptance_rate;
  return j.dump();
}

std::uint64_t stream_seed(std::uint64_t seed, Stream stream) {
  return Rng::mix(seed, static_cast<std::uint64_t>(stream));
}

dataset::LabeledDataset behaviour_set(const ExperimentConfig& cfg, std::size_t n,
                                      std::uint64_t seed) {
  return cfg.contextual_fraction
             ? dataset::sample_behaviour_dataset(n, seed, *cfg.contextual_fraction)
             : dataset::sample_behaviour_dataset(n, seed);
}

TaskData task_data(const ExperimentConfig& cfg) {
  if (cfg.task == Task::Kcbs) {
    return {behaviour_set(cfg, cfg.train_size, cfg.seed),
            behaviour_set(cfg, cfg.test_size, stream_seed(cfg.seed, Stream::TestData))};
  }
  return {dataset::sample_rhombus_dataset(cfg.train_size, std::nullopt,
                                          stream_seed(cfg.seed, Stream::RhombusUniform)),
          dataset::sample_rhombus_dataset(cfg.test_size, std::nullopt,
                                          stream_seed(cfg.seed, Stream::TestData))};
}

mlp::Architecture architecture(const ExperimentConfig& cfg, const std::vector<std::size_t>& layers) {
  return {cfg.task == Task::Kcbs ? std::size_t{10} : std::size_t{2}, layers, cfg.activation};
}

NnRun run_nn(const ExperimentConfig& cfg, const mlp::Architecture& arch,
             const dataset::LabeledDataset& train, const dataset::LabeledDataset& test,
             const mlp::TrainConfig& tc, std::uint64_t seed) {
  const auto t0 = Clock::now();
  mlp::TrainConfig c = tc;
  c.seed = seed;
  NnRun run;
  run.params = mlp::train(arch, train, c);
  run.outputs = uncertainty::nn_uncertainty_all(run.params, test.features());
  run.metrics = {to_string(cfg.task), arch.label(), train.size(), "nn",
                 uncertainty::accuracy(run.outputs, test.labels()), std::nullopt, ms_since(t0)};
  return run;
}

BnnRun run_bnn(const ExperimentConfig& cfg, const mlp::Architecture& arch,
               const dataset::LabeledDataset& train, const dataset::LabeledDataset& test,
               const bayes::PriorSpec& prior, const bayes::HmcConfig& hc, double init_scale,
               std::uint64_t seed) {
  const auto t0 = Clock::now();
  bayes::HmcConfig c = hc;
  c.seed = seed;
  BnnRun run;
  run.ensemble = bayes::hmc_sample(arch, train, prior, c, init_scale);
  run.outputs = uncertainty::decompose_all(run.ensemble, test.features());
  run.metrics = {to_string(cfg.task),
                 arch.label(),
                 train.size(),
                 "bnn",
                 uncertainty::accuracy(run.outputs, test.labels()),
                 run.ensemble.acceptance_rate,
                 ms_since(t0)};
  return run;
}

void write_predictions(const fs::path& path, std::span<const uncertainty::PredictiveOutput> outputs,
                       std::span<const int> labels) {
  if (outputs.size() != labels.size()) throw UsageError("outputs and labels differ in length");
  std::string text = "id,label,pred";
  const std::size_t classes = outputs.empty() ? 2 : outputs.front().classes();
  for (std::size_t c = 0; c < classes; ++c) text += ",p" + std::to_string(c);
  text += ",total,aleatoric,epistemic\n";
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& o = outputs[i];
    text += std::to_string(i) + "," + std::to_string(labels[i]) + "," + std::to_string(o.predicted);
    for (double p : o.probs) text += "," + fmt(p);
    text += "," + fmt(o.total) + "," + fmt(o.aleatoric) + "," + fmt(o.epistemic) + "\n";
  }
  csv::write_text(path, text);
}

void write_histograms(const fs::path& path, std::span<const uncertainty::PredictiveOutput> outputs,
                      std::span<const int> labels, std::size_t bins) {
  const auto all = uncertainty::uncertainty_histogram(outputs, labels, uncertainty::Selection::All, bins);
  const auto wrong =
      uncertainty::uncertainty_histogram(outputs, labels, uncertainty::Selection::Wrong, bins);
  std::string text = "bin_lo,bin_hi,count_all,count_wrong\n";
  for (std::size_t b = 0; b < bins; ++b) {
    text += fmt(all.edges[b]) + "," + fmt(all.edges[b + 1]) + "," + std::to_string(all.counts[b]) +
            "," + std::to_string(wrong.counts[b]) + "\n";
  }
  csv::write_text(path, text);
}

void write_calibration(const fs::path& path, const uncertainty::CalibrationCurve& curve) {
  auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  std::string text = "alpha,p_mis_high,n_high,p_mis_low,n_low\n";
  for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
    text += fmt(curve.alphas[i]) + "," + cell(curve.p_mis_high[i]) + "," +
            std::to_string(curve.n_high[i]) + "," + cell(curve.p_mis_low[i]) + "," +
            std::to_string(curve.n_low[i]) + "\n";
  }
  csv::write_text(path, text);
}

CommandResult cmd_generate(const ExperimentConfig& cfg, const MetricsSink&) {
  cfg.validate();
  CommandResult result;
  const auto data = task_data(cfg);
  json meta;
  auto put = [&](const dataset::LabeledDataset& ds, const char* name, const char* key) {
    const auto path = cfg.out_dir / name;
    dataset::write_dataset(ds, path);
    result.files.push_back(path);
    meta[key] = meta_json(ds);
  };
  put(data.train, "train.txt", "train");
  put(data.test, "test.txt", "test");
  if (cfg.task == Task::Rhombus) {
    const auto biased = dataset::sample_rhombus_dataset(
        cfg.train_size, dataset::lower_left_bias(cfg.rhombus.bias_ratio),
        stream_seed(cfg.seed, Stream::RhombusBiased));
    put(biased, "train_biased.txt", "train_biased");
  }
  const auto meta_path = cfg.out_dir / "dataset_meta.json";
  csv::write_text(meta_path, meta.dump(2) + "\n");
  result.files.push_back(meta_path);
  return result;
}

CommandResult cmd_train_nn(const ExperimentConfig& cfg, const MetricsSink& sink) {
  cfg.validate();
  CommandResult result;
  const auto run = single_run(cfg, sink, result, true, false);
  write_nn_files(cfg, run, result);
  return result;
}

CommandResult cmd_train_bnn(const ExperimentConfig& cfg, const MetricsSink& sink) {
  cfg.validate();
  CommandResult result;
  const auto run = single_run(cfg, sink, result, false, true);
  write_bnn_files(cfg, run, result);
  return result;
}

CommandResult cmd_histograms(const ExperimentConfig& cfg, const MetricsSink& sink) {
  cfg.validate();
  CommandResult result;
  const auto run = single_run(cfg, sink, result, wants_nn(cfg), wants_bnn(cfg));
  if (run.nn) write_nn_files(cfg, run, result);
  if (run.bnn) write_bnn_files(cfg, run, result);
  write_histogram_files(cfg, run, result);
  return result;
}

CommandResult cmd_calibration(const ExperimentConfig& cfg, const MetricsSink& sink) {
  cfg.validate();
  CommandResult result;
  const auto run = single_run(cfg, sink, result, wants_nn(cfg), wants_bnn(cfg));
  if (run.nn) write_nn_files(cfg, run, result);
  if (run.bnn) write_bnn_files(cfg, run, result);
  write_calibration_files(cfg, run, result);
  return result;
}

CommandResult cmd_accuracy_sweep(const ExperimentConfig& cfg, const MetricsSink& sink) {
  cfg.validate();
  if (cfg.model != ModelKind::Both) throw UsageError("accuracy-sweep trains both models; set model to both");
  CommandResult result;
  const auto test = task_data(cfg).test;
  std::string text = "size,arch,model,accuracy,seed\n";
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t repeat_seed = Rng::mix(stream_seed(cfg.seed, Stream::Sweep), r);
    for (std::size_t n : cfg.train_sizes) {
      const std::uint64_t data_seed = Rng::mix(repeat_seed, n);
      const auto train = cfg.task == Task::Kcbs
                             ? behaviour_set(cfg, n, data_seed)
                             : dataset::sample_rhombus_dataset(n, std::nullopt, data_seed);
      for (std::size_t a = 0; a < cfg.sweep_layers.size(); ++a) {
        const auto arch = architecture(cfg, cfg.sweep_layers[a]);
        const auto nn = run_nn(cfg, arch, train, test, cfg.train, Rng::mix(data_seed, 2 * a + 1));
        emit(sink, result, nn.metrics);
        const auto bnn = run_bnn(cfg, arch, train, test, cfg.prior, cfg.sweep_hmc,
                                 cfg.train.init_scale, Rng::mix(data_seed, 2 * a + 2));
        emit(sink, result, bnn.metrics);
        for (const auto* m : {&nn.metrics, &bnn.metrics}) {
          text += std::to_string(n) + "," + m->arch + "," + m->model + "," + fmt(m->accuracy) +
                  "," + std::to_string(r) + "\n";
        }
      }
    }
  }
  const auto path = cfg.out_dir / "accuracy.csv";
  csv::write_text(path, text);
  result.files.push_back(path);
  return result;
}

CommandResult cmd_rhombus(const ExperimentConfig& cfg, const MetricsSink& sink) {
  cfg.validate();
  CommandResult result;
  ExperimentConfig rc = cfg;
  rc.task = Task::Rhombus;
  const auto arch = architecture(rc, cfg.rhombus.layers);
  const auto grid = rhombus_grid(cfg.rhombus.grid_resolution);
  const std::uint64_t model_seed = stream_seed(cfg.seed, Stream::RhombusModels);
  const double ln2 = std::numbers::ln2;

  struct Variant {
    const char* name;
    std::optional<dataset::BiasSpec> bias;
    Stream stream;
  };
  const Variant variants[] = {{"uniform", std::nullopt, Stream::RhombusUniform},
                              {"biased", dataset::lower_left_bias(cfg.rhombus.bias_ratio),
                               Stream::RhombusBiased}};
  for (std::size_t v = 0; v < 2; ++v) {
    const auto& var = variants[v];
    const auto train = dataset::sample_rhombus_dataset(cfg.rhombus.train_size, var.bias,
                                                       stream_seed(cfg.seed, var.stream));
    const auto train_path = cfg.out_dir / ("rhombus_" + std::string(var.name) + "_train.txt");
    dataset::write_dataset(train, train_path);
    result.files.push_back(train_path);

    std::optional<NnRun> nn;
    std::optional<BnnRun> bnn;
    if (wants_nn(cfg)) {
      nn = run_nn(rc, arch, train, grid, cfg.rhombus.train, Rng::mix(model_seed, 2 * v));
      nn->metrics.task = "rhombus-" + std::string(var.name);
      emit(sink, result, nn->metrics);
    }
    if (wants_bnn(cfg)) {
      bnn = run_bnn(rc, arch, train, grid, cfg.rhombus.prior, cfg.rhombus.hmc,
                    cfg.rhombus.train.init_scale, Rng::mix(model_seed, 2 * v + 1));
      bnn->metrics.task = "rhombus-" + std::string(var.name);
      emit(sink, result, bnn->metrics);
    }

    std::string text = "x,y,label";
    if (nn) text += ",nn_pred,nn_total,nn_total_norm";
    if (bnn) text += ",bnn_pred,bnn_total,bnn_aleatoric,bnn_epistemic,bnn_total_norm";
    text += "\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto x = grid.row(i);
      text += fmt(x[0]) + "," + fmt(x[1]) + "," + std::to_string(grid.label(i));
      if (nn) {
        const auto& o = nn->outputs[i];
        text += "," + std::to_string(o.predicted) + "," + fmt(o.total) + "," + fmt(o.total / ln2);
      }
      if (bnn) {
        const auto& o = bnn->outputs[i];
        text += "," + std::to_string(o.predicted) + "," + fmt(o.total) + "," + fmt(o.aleatoric) +
                "," + fmt(o.epistemic) + "," + fmt(o.total / ln2);
      }
      text += "\n";
    }
    const auto path = cfg.out_dir / ("rhombus_" + std::string(var.name) + ".csv");
    csv::write_text(path, text);
    result.files.push_back(path);
  }
  return result;
}

CommandResult cmd_run_all(const ExperimentConfig& cfg, const MetricsSink& sink) {
  cfg.validate();
  CommandResult result;
  auto absorb = [&](CommandResult r) {
    result.metrics.insert(result.metrics.end(), r.metrics.begin(), r.metrics.end());
    result.files.insert(result.files.end(), r.files.begin(), r.files.end());
  };
  absorb(cmd_generate(cfg, sink));
  // One training run feeds train-nn, train-bnn, histograms and calibration.
  {
    CommandResult single;
    const auto run = single_run(cfg, sink, single, wants_nn(cfg), wants_bnn(cfg));
    if (run.nn) write_nn_files(cfg, run, single);
    if (run.bnn) write_bnn_files(cfg, run, single);
    write_histogram_files(cfg, run, single);
    write_calibration_files(cfg, run, single);
    absorb(std::move(single));
  }
  if (cfg.model == ModelKind::Both) absorb(cmd_accuracy_sweep(cfg, sink));
  absorb(cmd_rhombus(cfg, sink));
  return result;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "generate",   "train-nn",    "train-bnn", "accuracy-sweep",
      "histograms", "calibration", "rhombus",   "run-all"};
  return names;
}

CommandResult run_command(std::string_view name, const ExperimentConfig& cfg,
                          std::ostream& metrics_out) {
  cfg.validate();
  using Fn = CommandResult (*)(const ExperimentConfig&, const MetricsSink&);
  Fn fn = nullptr;
  if (name == "generate") fn = cmd_generate;
  else if (name == "train-nn") fn = cmd_train_nn;
  else if (name == "train-bnn") fn = cmd_train_bnn;
  else if (name == "accuracy-sweep") fn = cmd_accuracy_sweep;
  else if (name == "histograms") fn = cmd_histograms;
  else if (name == "calibration") fn = cmd_calibration;
  else if (name == "rhombus") fn = cmd_rhombus;
  else if (name == "run-all") fn = cmd_run_all;
  else throw UsageError("unknown command '" + std::string(name) + "'");

  csv::write_text(cfg.out_dir / "config.resolved.json", config_to_json(cfg));
  return fn(cfg, [&](const Metrics& m) { metrics_out << to_json_line(m) << std::endl; });
}

}  // namespace ctxbnn::experiment
