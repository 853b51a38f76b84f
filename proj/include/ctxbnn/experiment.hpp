#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxbnn/bayes.hpp"
#include "ctxbnn/dataset.hpp"
#include "ctxbnn/mlp.hpp"
#include "ctxbnn/uncertainty.hpp"

namespace ctxbnn::experiment {

enum class Task { Kcbs, Rhombus };
enum class ModelKind { Nn, Bnn, Both };

std::string to_string(Task t);
std::string to_string(ModelKind m);

struct RhombusConfig {
  std::vector<std::size_t> layers{8, 4, 2};
  std::size_t train_size = 1000;
  std::size_t grid_resolution = 50;
  double bias_ratio = 1.0 / 50.0;
  bayes::PriorSpec prior{1.0};
  bayes::HmcConfig hmc;
  mlp::TrainConfig train;
};

struct ExperimentConfig {
  Task task = Task::Kcbs;
  ModelKind model = ModelKind::Both;
  /// Hidden and output layer widths for the single-run commands.
  std::vector<std::size_t> layers{64, 32, 8, 2};
  std::vector<std::vector<std::size_t>> sweep_layers{
      {128, 64, 32, 16, 2}, {64, 32, 16, 2}, {32, 16, 2}};
  std::vector<std::size_t> train_sizes{50, 200, 1000, 5000};
  std::size_t train_size = 500;
  std::size_t test_size = 4000;
  std::size_t repeats = 3;
  /// Share of contextual rows in generated behaviour sets; unset means the
  /// plain rejection sampler (about 0.7% contextual).
  std::optional<double> contextual_fraction = 0.5;
  mlp::Activation activation = mlp::Activation::Relu;
  mlp::TrainConfig train;
  bayes::PriorSpec prior{0.3};
  bayes::HmcConfig hmc;
  bayes::HmcConfig sweep_hmc;
  RhombusConfig rhombus;
  std::size_t histogram_bins = 20;
  std::size_t alpha_points = 21;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";

  ExperimentConfig();
  /// Throws UsageError.
  void validate() const;
};

/// Parses a JSON config; keys absent from the text keep their defaults and
/// unknown keys are rejected. Throws UsageError.
ExperimentConfig parse_config(std::string_view json_text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved config as pretty-printed JSON.
std::string config_to_json(const ExperimentConfig& cfg);

/// One line of the per-run metrics summary.
struct Metrics {
  std::string task;
  std::string arch;
  std::size_t n_train = 0;
  std::string model;
  double accuracy = 0.0;
  std::optional<double> acceptance_rate;
  double wall_ms = 0.0;
};

std::string to_json_line(const Metrics& m);

/// Seed streams derived from the config seed. The kcbs training set uses
/// the config seed itself.
enum class Stream : std::uint64_t {
  TestData = 2,
  NnInit = 3,
  Hmc = 4,
  RhombusUniform = 5,
  RhombusBiased = 6,
  RhombusModels = 7,
  Sweep = 8,
};
std::uint64_t stream_seed(std::uint64_t seed, Stream stream);

struct TaskData {
  dataset::LabeledDataset train;
  dataset::LabeledDataset test;
};

/// Training and test sets for cfg.task at cfg.train_size / cfg.test_size.
TaskData task_data(const ExperimentConfig& cfg);
/// Behaviour set as generated for the kcbs task.
dataset::LabeledDataset behaviour_set(const ExperimentConfig& cfg, std::size_t n,
                                      std::uint64_t seed);
mlp::Architecture architecture(const ExperimentConfig& cfg, const std::vector<std::size_t>& layers);

struct NnRun {
  mlp::MlpParams params;
  std::vector<uncertainty::PredictiveOutput> outputs;
  Metrics metrics;
};

struct BnnRun {
  bayes::PosteriorEnsemble ensemble;
  std::vector<uncertainty::PredictiveOutput> outputs;
  Metrics metrics;
};

NnRun run_nn(const ExperimentConfig& cfg, const mlp::Architecture& arch,
             const dataset::LabeledDataset& train, const dataset::LabeledDataset& test,
             const mlp::TrainConfig& tc, std::uint64_t seed);
BnnRun run_bnn(const ExperimentConfig& cfg, const mlp::Architecture& arch,
               const dataset::LabeledDataset& train, const dataset::LabeledDataset& test,
               const bayes::PriorSpec& prior, const bayes::HmcConfig& hc, double init_scale,
               std::uint64_t seed);

/// Per-sample CSV: id,label,pred,p0..p{C-1},total,aleatoric,epistemic.
void write_predictions(const std::filesystem::path& path,
                       std::span<const uncertainty::PredictiveOutput> outputs,
                       std::span<const int> labels);

/// Columns bin_lo,bin_hi,count_all,count_wrong (bins in nats over [0, ln C]).
void write_histograms(const std::filesystem::path& path,
                      std::span<const uncertainty::PredictiveOutput> outputs,
                      std::span<const int> labels, std::size_t bins);

/// Columns alpha,p_mis_high,n_high,p_mis_low,n_low on normalized
/// uncertainty; an undefined probability is an empty cell.
void write_calibration(const std::filesystem::path& path,
                       const uncertainty::CalibrationCurve& curve);

/// Receives each model's metrics as soon as it finishes.
using MetricsSink = std::function<void(const Metrics&)>;

struct CommandResult {
  std::vector<Metrics> metrics;
  std::vector<std::filesystem::path> files;
};

CommandResult cmd_generate(const ExperimentConfig& cfg, const MetricsSink& sink = {});
CommandResult cmd_train_nn(const ExperimentConfig& cfg, const MetricsSink& sink = {});
CommandResult cmd_train_bnn(const ExperimentConfig& cfg, const MetricsSink& sink = {});
CommandResult cmd_accuracy_sweep(const ExperimentConfig& cfg, const MetricsSink& sink = {});
CommandResult cmd_histograms(const ExperimentConfig& cfg, const MetricsSink& sink = {});
CommandResult cmd_calibration(const ExperimentConfig& cfg, const MetricsSink& sink = {});
CommandResult cmd_rhombus(const ExperimentConfig& cfg, const MetricsSink& sink = {});
CommandResult cmd_run_all(const ExperimentConfig& cfg, const MetricsSink& sink = {});

const std::vector<std::string>& command_names();
/// Runs a subcommand by name, writing the resolved config snapshot first and
/// one metrics JSON line per trained model to `metrics_out`.
CommandResult run_command(std::string_view name, const ExperimentConfig& cfg,
                          std::ostream& metrics_out);

}  // namespace ctxbnn::experiment
