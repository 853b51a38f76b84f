#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ctxbnn/bayes.hpp"
#include "ctxbnn/mlp.hpp"

namespace ctxbnn::uncertainty {

/// Predictive distribution plus its entropy split, all in nats.
struct PredictiveOutput {
  std::vector<double> probs;
  std::size_t predicted = 0;
  double total = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
  /// False for a point-estimate network: aleatoric then holds the full
  /// entropy and epistemic is 0 by convention.
  bool decomposed = true;

  std::size_t classes() const { return probs.size(); }
};

/// Decomposition from explicit member outputs: total = H(mean),
/// aleatoric = mean of member entropies, epistemic = total - aleatoric.
PredictiveOutput decompose_members(std::span<const std::vector<double>> member_probs);

PredictiveOutput decompose(const bayes::PosteriorEnsemble& ensemble, std::span<const double> x);

/// Batched decompose over the rows of a feature matrix.
std::vector<PredictiveOutput> decompose_all(const bayes::PosteriorEnsemble& ensemble,
                                            std::span<const double> features);

PredictiveOutput nn_uncertainty(const mlp::MlpParams& p, std::span<const double> x);
PredictiveOutput nn_output(std::vector<double> probs);
std::vector<PredictiveOutput> nn_uncertainty_all(const mlp::MlpParams& p,
                                                 std::span<const double> features);

enum class Component { Total, Aleatoric, Epistemic };

/// Component value divided by ln C, so uncertainties lie in [0, 1].
double normalized(const PredictiveOutput& out, Component component = Component::Total);
double value(const PredictiveOutput& out, Component component);

/// Empirical P(M | U > alpha) and P(M | U < alpha) on normalized uncertainty.
/// A threshold with an empty side reports nullopt for that side.
struct CalibrationCurve {
  std::vector<double> alphas;
  std::vector<std::optional<double>> p_mis_high;
  std::vector<std::size_t> n_high;
  std::vector<std::optional<double>> p_mis_low;
  std::vector<std::size_t> n_low;
};

CalibrationCurve misclassification_curve(std::span<const PredictiveOutput> outputs,
                                         std::span<const int> labels,
                                         std::span<const double> alphas,
                                         Component component = Component::Total);

/// n+1 evenly spaced thresholds on [0, 1].
std::vector<double> alpha_grid(std::size_t points = 21);

enum class Selection { All, Wrong };

/// Fixed-width bins over [0, ln C] (nats); values outside are clamped into
/// the end bins.
struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> counts;

  std::size_t total() const;
};

Histogram uncertainty_histogram(std::span<const PredictiveOutput> outputs,
                                std::span<const int> labels, Selection selection,
                                std::size_t bins = 20, Component component = Component::Total);

/// Fraction of predictions matching labels.
double accuracy(std::span<const PredictiveOutput> outputs, std::span<const int> labels);

}  // namespace ctxbnn::uncertainty
