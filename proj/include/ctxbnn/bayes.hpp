#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ctxbnn/dataset.hpp"
#include "ctxbnn/mlp.hpp"

namespace ctxbnn::bayes {

/// Zero-mean isotropic Gaussian prior over all network parameters.
struct PriorSpec {
  double variance = 1.0;
};

struct HmcConfig {
  double step_size = 0.01;
  std::size_t leapfrog_steps = 20;
  std::size_t samples = 200;  // retained after burn-in and thinning
  std::size_t burn_in = 500;
  std::size_t thinning = 5;
  std::uint64_t seed = 0;
  /// Adapt step_size during burn-in towards acceptance in [0.65, 0.85].
  bool adapt = true;

  void validate() const;
  std::size_t total_iterations() const { return burn_in + samples * thinning; }
};

inline constexpr double kLowAcceptance = 0.05;
inline constexpr double kAdaptTarget = 0.75;

/// log p(D|w) + log p(w) without normalizing constants.
double log_posterior_unnorm(const mlp::MlpParams& p, const dataset::LabeledDataset& ds,
                            const PriorSpec& prior);
std::vector<double> log_posterior_gradient(const mlp::MlpParams& p,
                                           const dataset::LabeledDataset& ds,
                                           const PriorSpec& prior);

/// Writes d/dtheta log pi(theta) into grad.
using GradFn = std::function<void(std::span<const double> theta, std::span<double> grad)>;
/// Returns log pi(theta) and writes its gradient into grad.
using LogDensityFn =
    std::function<double(std::span<const double> theta, std::span<double> grad)>;

/// Half-step / full-steps / half-step leapfrog for H = -log pi + |p|^2 / 2,
/// updating position and momentum in place. Returns false (state undefined)
/// if any component turns non-finite.
bool leapfrog(std::span<double> position, std::span<double> momentum, double step_size,
              std::size_t steps, const GradFn& grad_log_density);

/// Raw chain over an arbitrary differentiable target.
struct Chain {
  std::vector<std::vector<double>> samples;
  /// Hamiltonian of the retained state at each retained iteration.
  std::vector<double> energies;
  double acceptance_rate = 0.0;  // post-burn-in
  double final_step_size = 0.0;
  std::size_t divergences = 0;
  std::vector<std::string> warnings;
};

Chain hmc_chain(const LogDensityFn& log_density, std::vector<double> initial,
                const HmcConfig& cfg);

struct PosteriorEnsemble {
  std::vector<mlp::MlpParams> samples;
  double acceptance_rate = 0.0;
  std::vector<double> energies;
  double final_step_size = 0.0;
  std::vector<std::string> warnings;

  const mlp::Architecture& arch() const { return samples.front().arch; }
  /// Appends another chain's samples (same architecture).
  void merge(const PosteriorEnsemble& other);
};

/// HMC over network weights. The chain starts from the seeded initialization
/// init_params(arch, init_scale, cfg.seed) unless `start` is given.
PosteriorEnsemble hmc_sample(const mlp::Architecture& arch, const dataset::LabeledDataset& ds,
                             const PriorSpec& prior, const HmcConfig& cfg,
                             double init_scale = 1.0, const mlp::MlpParams* start = nullptr);

/// Mean of the members' softmax outputs.
std::vector<double> predictive(const PosteriorEnsemble& ensemble, std::span<const double> x);

/// Per-member softmax outputs for each row of a feature matrix:
/// result[member][row] -> probability vector.
std::vector<std::vector<std::vector<double>>> member_probabilities(
    const PosteriorEnsemble& ensemble, std::span<const double> features);

/// Effective sample size of a scalar chain (Geyer initial positive sequence).
double effective_sample_size(std::span<const double> chain);

struct EnsembleFile {
  PosteriorEnsemble ensemble;
  PriorSpec prior;
  HmcConfig hmc;
};

void write_ensemble(std::ostream& out, const PosteriorEnsemble& ensemble, const PriorSpec& prior,
                    const HmcConfig& cfg);
EnsembleFile read_ensemble(std::istream& in, const std::string& source = "<stream>");

}  // namespace ctxbnn::bayes
