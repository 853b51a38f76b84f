#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ctxbnn/dataset.hpp"

namespace ctxbnn::mlp {

enum class Activation { Relu, Tanh };

std::string to_string(Activation a);
Activation parse_activation(std::string_view name);

/// Fully connected stack. layer_sizes lists every layer's width, the last
/// one being the class count, e.g. {64, 32, 8, 2}.
struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::Relu;

  /// Throws UsageError unless the stack is non-empty and ends in >= 2 classes.
  void validate() const;
  std::size_t classes() const { return layer_sizes.back(); }
  std::size_t param_count() const;
  /// "64-32-8-2"
  std::string label() const;

  bool operator==(const Architecture&) const = default;
};

/// Parses "64,32,8,2" or "64-32-8-2".
std::vector<std::size_t> parse_layers(std::string_view text);

/// All weights and biases in one vector. Per layer: the out x in weight
/// matrix (row-major), then the out-dimensional bias.
struct MlpParams {
  Architecture arch;
  std::vector<double> theta;

  /// Zero-initialized parameters of the right length.
  static MlpParams zeros(Architecture arch);
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double init_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Weights uniform in [-s, s], s = init_scale / sqrt(fan_in); biases zero.
MlpParams init_params(const Architecture& arch, double init_scale, std::uint64_t seed);

std::vector<double> forward_logits(const MlpParams& p, std::span<const double> x);

/// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> z);

/// Shannon entropy in nats with 0 log 0 = 0.
double entropy(std::span<const double> probs);

/// Summed (not averaged) cross-entropy over the dataset.
double cross_entropy_loss(const MlpParams& p, const dataset::LabeledDataset& ds);

/// Exact gradient of cross_entropy_loss with respect to theta.
std::vector<double> backprop_gradient(const MlpParams& p, const dataset::LabeledDataset& ds);

/// Batched loss/gradient evaluation with reusable buffers. Not thread-safe;
/// give each thread its own instance.
class Evaluator {
 public:
  Evaluator(Architecture arch, const dataset::LabeledDataset& ds);
  ~Evaluator();
  Evaluator(Evaluator&&) noexcept;
  Evaluator& operator=(Evaluator&&) noexcept;

  /// Loss over all rows (rows empty) or the listed rows. When grad is
  /// non-empty it receives the gradient (overwritten, not accumulated).
  double loss_and_gradient(std::span<const double> theta, std::span<double> grad,
                           std::span<const std::size_t> rows = {});

  const Architecture& arch() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct TrainLog {
  /// Mean per-sample loss of each epoch, accumulated over its mini-batches.
  std::vector<double> epoch_loss;
};

/// Mini-batch gradient descent from a seeded initialization. Each step moves
/// theta by -learning_rate times the batch-mean gradient. Throws
/// NumericDivergence if the loss becomes non-finite.
MlpParams train(const Architecture& arch, const dataset::LabeledDataset& ds,
                const TrainConfig& cfg, TrainLog* log = nullptr);

struct Prediction {
  std::size_t predicted = 0;
  std::vector<double> probs;
  double entropy = 0.0;
};

/// Lowest index wins ties.
std::size_t argmax(std::span<const double> v);

Prediction predict(const MlpParams& p, std::span<const double> x);

/// Softmax outputs for every row of a feature matrix (row-major, arch.input_dim columns).
std::vector<std::vector<double>> predict_proba(const MlpParams& p,
                                               std::span<const double> features);

struct Checkpoint {
  MlpParams params;
  std::uint64_t seed = 0;
};

void write_checkpoint(std::ostream& out, const MlpParams& p, std::uint64_t seed);
Checkpoint read_checkpoint(std::istream& in, const std::string& source = "<stream>");
/// Continues reading a stream that holds several blocks; lineno tracks position.
Checkpoint read_checkpoint(std::istream& in, const std::string& source, std::size_t& lineno);

// Architecture header line used by checkpoint and ensemble files.
std::string format_arch_line(const Architecture& arch);
Architecture parse_arch_line(std::string_view line, const std::string& source, std::size_t lineno);

}  // namespace ctxbnn::mlp
