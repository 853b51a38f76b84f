#include "ctxbnn/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "ctxbnn/errors.hpp"

namespace ctxbnn::uncertainty {

namespace {

constexpr double kJensenSlack = 1e-12;

void check_labels(std::span<const PredictiveOutput> outputs, std::span<const int> labels) {
  if (outputs.size() != labels.size()) {
    throw UsageError("outputs and labels differ in length");
  }
}

bool is_wrong(const PredictiveOutput& out, int label) {
  return static_cast<int>(out.predicted) != label;
}

}  // namespace

PredictiveOutput decompose_members(std::span<const std::vector<double>> member_probs) {
  if (member_probs.empty()) throw UsageError("decomposition needs a non-empty ensemble");
  const std::size_t classes = member_probs.front().size();
  PredictiveOutput out;
  out.probs.assign(classes, 0.0);
  double mean_entropy = 0.0;
  for (const auto& probs : member_probs) {
    if (probs.size() != classes) throw UsageError("ensemble members disagree on class count");
    for (std::size_t c = 0; c < classes; ++c) out.probs[c] += probs[c];
    mean_entropy += mlp::entropy(probs);
  }
  const double m = static_cast<double>(member_probs.size());
  for (double& v : out.probs) v /= m;
  mean_entropy /= m;

  out.predicted = mlp::argmax(out.probs);
  out.total = mlp::entropy(out.probs);
  out.aleatoric = mean_entropy;
  double epistemic = out.total - out.aleatoric;
  if (epistemic < 0.0 && epistemic >= -kJensenSlack) {
    // Rounding only; entropy of the mean is never below the mean entropy.
    out.aleatoric = out.total;
    epistemic = 0.0;
  }
  out.epistemic = epistemic;
  return out;
}

PredictiveOutput decompose(const bayes::PosteriorEnsemble& ensemble, std::span<const double> x) {
  if (ensemble.samples.empty()) throw UsageError("decomposition needs a non-empty ensemble");
  std::vector<std::vector<double>> members;
  members.reserve(ensemble.samples.size());
  for (const auto& s : ensemble.samples) members.push_back(mlp::softmax(mlp::forward_logits(s, x)));
  return decompose_members(members);
}

std::vector<PredictiveOutput> decompose_all(const bayes::PosteriorEnsemble& ensemble,
                                            std::span<const double> features) {
  if (ensemble.samples.empty()) throw UsageError("decomposition needs a non-empty ensemble");
  const auto per_member = bayes::member_probabilities(ensemble, features);
  const std::size_t rows = per_member.front().size();
  std::vector<PredictiveOutput> out;
  out.reserve(rows);
  std::vector<std::vector<double>> members(per_member.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t m = 0; m < per_member.size(); ++m) members[m] = per_member[m][r];
    out.push_back(decompose_members(members));
  }
  return out;
}

PredictiveOutput nn_output(std::vector<double> probs) {
  PredictiveOutput out;
  out.probs = std::move(probs);
  out.predicted = mlp::argmax(out.probs);
  out.total = mlp::entropy(out.probs);
  out.aleatoric = out.total;
  out.epistemic = 0.0;
  out.decomposed = false;
  return out;
}

PredictiveOutput nn_uncertainty(const mlp::MlpParams& p, std::span<const double> x) {
  return nn_output(mlp::softmax(mlp::forward_logits(p, x)));
}

std::vector<PredictiveOutput> nn_uncertainty_all(const mlp::MlpParams& p,
                                                 std::span<const double> features) {
  auto probs = mlp::predict_proba(p, features);
  std::vector<PredictiveOutput> out;
  out.reserve(probs.size());
  for (auto& pr : probs) out.push_back(nn_output(std::move(pr)));
  return out;
}

double value(const PredictiveOutput& out, Component component) {
  switch (component) {
    case Component::Total: return out.total;
    case Component::Aleatoric: return out.aleatoric;
    case Component::Epistemic: return out.epistemic;
  }
  return out.total;
}

double normalized(const PredictiveOutput& out, Component component) {
  if (out.classes() < 2) throw UsageError("normalization needs at least two classes");
  return value(out, component) / std::log(static_cast<double>(out.classes()));
}

CalibrationCurve misclassification_curve(std::span<const PredictiveOutput> outputs,
                                         std::span<const int> labels,
                                         std::span<const double> alphas, Component component) {
  check_labels(outputs, labels);
  if (outputs.empty()) throw UsageError("misclassification curve needs at least one output");
  CalibrationCurve curve;
  curve.alphas.assign(alphas.begin(), alphas.end());
  std::vector<double> u(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) u[i] = normalized(outputs[i], component);

  for (double alpha : alphas) {
    std::size_t high = 0, high_wrong = 0, low = 0, low_wrong = 0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const bool wrong = is_wrong(outputs[i], labels[i]);
      if (u[i] > alpha) {
        ++high;
        high_wrong += wrong;
      } else if (u[i] < alpha) {
        ++low;
        low_wrong += wrong;
      }
    }
    auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
      if (den == 0) return std::nullopt;
      return static_cast<double>(num) / static_cast<double>(den);
    };
    curve.p_mis_high.push_back(ratio(high_wrong, high));
    curve.n_high.push_back(high);
    curve.p_mis_low.push_back(ratio(low_wrong, low));
    curve.n_low.push_back(low);
  }
  return curve;
}

std::vector<double> alpha_grid(std::size_t points) {
  if (points < 2) throw UsageError("alpha grid needs at least two points");
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return grid;
}

std::size_t Histogram::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

Histogram uncertainty_histogram(std::span<const PredictiveOutput> outputs,
                                std::span<const int> labels, Selection selection,
                                std::size_t bins, Component component) {
  check_labels(outputs, labels);
  if (bins == 0) throw UsageError("histogram needs at least one bin");
  const std::size_t classes = outputs.empty() ? 2 : outputs.front().classes();
  const double top = std::log(static_cast<double>(classes));
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    h.edges[b] = top * static_cast<double>(b) / static_cast<double>(bins);
  }
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (selection == Selection::Wrong && !is_wrong(outputs[i], labels[i])) continue;
    const double v = value(outputs[i], component);
    auto b = static_cast<long long>(std::floor(v / top * static_cast<double>(bins)));
    b = std::clamp<long long>(b, 0, static_cast<long long>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

double accuracy(std::span<const PredictiveOutput> outputs, std::span<const int> labels) {
  check_labels(outputs, labels);
  if (outputs.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) correct += !is_wrong(outputs[i], labels[i]);
  return static_cast<double>(correct) / static_cast<double>(outputs.size());
}

}  // namespace ctxbnn::uncertainty
