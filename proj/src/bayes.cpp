#include "ctxbnn/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "ctxbnn/csv.hpp"
#include "ctxbnn/errors.hpp"
#include "ctxbnn/rng.hpp"

namespace ctxbnn::bayes {

namespace {

// Multiplicative step-size gain per burn-in iteration.
constexpr double kAdaptGain = 0.1;

double squared_norm(std::span<const double> v) {
  return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Leapfrog that also reports log pi at the end point; grad holds the
// gradient at the start on entry and at the end on exit.
double integrate(std::span<double> q, std::span<double> p, std::span<double> grad, double eps,
                 std::size_t steps, const LogDensityFn& f, double log_density) {
  if (steps == 0) return log_density;
  const std::size_t n = q.size();
  for (std::size_t k = 0; k < n; ++k) p[k] += 0.5 * eps * grad[k];
  for (std::size_t s = 1; s <= steps; ++s) {
    for (std::size_t k = 0; k < n; ++k) q[k] += eps * p[k];
    log_density = f(q, grad);
    if (!std::isfinite(log_density) || !all_finite(grad)) return NAN;
    const double scale = s < steps ? eps : 0.5 * eps;
    for (std::size_t k = 0; k < n; ++k) p[k] += scale * grad[k];
  }
  return log_density;
}

}  // namespace

void HmcConfig::validate() const {
  if (!(step_size > 0.0)) throw UsageError("HMC step size must be positive");
  if (samples == 0) throw UsageError("HMC needs at least one retained sample");
  if (thinning == 0) throw UsageError("HMC thinning must be positive");
  if (leapfrog_steps == 0) throw UsageError("HMC needs at least one leapfrog step");
}

double log_posterior_unnorm(const mlp::MlpParams& p, const dataset::LabeledDataset& ds,
                            const PriorSpec& prior) {
  if (!(prior.variance > 0.0)) throw UsageError("prior variance must be positive");
  return -mlp::cross_entropy_loss(p, ds) - squared_norm(p.theta) / (2.0 * prior.variance);
}

std::vector<double> log_posterior_gradient(const mlp::MlpParams& p,
                                           const dataset::LabeledDataset& ds,
                                           const PriorSpec& prior) {
  if (!(prior.variance > 0.0)) throw UsageError("prior variance must be positive");
  auto grad = mlp::backprop_gradient(p, ds);
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = -grad[k] - p.theta[k] / prior.variance;
  return grad;
}

bool leapfrog(std::span<double> position, std::span<double> momentum, double step_size,
              std::size_t steps, const GradFn& grad_log_density) {
  if (position.size() != momentum.size()) throw UsageError("position/momentum size mismatch");
  if (steps == 0) return true;
  std::vector<double> grad(position.size());
  grad_log_density(position, grad);
  if (!all_finite(grad)) return false;
  const LogDensityFn f = [&](std::span<const double> q, std::span<double> g) {
    grad_log_density(q, g);
    return 0.0;
  };
  const double end = integrate(position, momentum, grad, step_size, steps, f, 0.0);
  return std::isfinite(end) && all_finite(position) && all_finite(momentum);
}

Chain hmc_chain(const LogDensityFn& log_density, std::vector<double> initial,
                const HmcConfig& cfg) {
  cfg.validate();
  const std::size_t n = initial.size();
  Rng rng(cfg.seed);
  std::vector<double> theta = std::move(initial);
  std::vector<double> grad(n);
  double logp = log_density(theta, grad);
  if (!std::isfinite(logp) || !all_finite(grad)) {
    throw NumericDivergence("HMC start point has non-finite log density");
  }

  Chain chain;
  chain.samples.reserve(cfg.samples);
  std::vector<double> momentum(n), q(n), p(n), g(n);
  double eps = cfg.step_size;
  std::size_t accepted = 0;
  const std::size_t total = cfg.total_iterations();

  for (std::size_t it = 0; it < total; ++it) {
    for (double& v : momentum) v = rng.normal();
    const double h_old = -logp + 0.5 * squared_norm(momentum);
    q = theta;
    p = momentum;
    g = grad;
    const double logp_new = integrate(q, p, g, eps, cfg.leapfrog_steps, log_density, logp);

    double accept_prob = 0.0;
    double h_new = h_old;
    if (std::isfinite(logp_new) && all_finite(p)) {
      h_new = -logp_new + 0.5 * squared_norm(p);
      accept_prob = std::isfinite(h_new) ? std::min(1.0, std::exp(h_old - h_new)) : 0.0;
    } else {
      ++chain.divergences;
    }
    // Always consume the uniform so the stream does not depend on divergence.
    const double u = rng.uniform01();
    const bool accept = u < accept_prob;
    if (accept) {
      theta.swap(q);
      grad.swap(g);
      logp = logp_new;
    }

    if (it < cfg.burn_in) {
      if (cfg.adapt) eps *= std::exp(kAdaptGain * (accept_prob - kAdaptTarget));
      continue;
    }
    if (accept) ++accepted;
    if ((it - cfg.burn_in + 1) % cfg.thinning == 0) {
      chain.samples.push_back(theta);
      chain.energies.push_back(accept ? h_new : h_old);
    }
  }

  chain.final_step_size = eps;
  const std::size_t post = total - cfg.burn_in;
  chain.acceptance_rate = post ? static_cast<double>(accepted) / static_cast<double>(post) : 0.0;
  if (chain.acceptance_rate < kLowAcceptance) {
    chain.warnings.push_back("acceptance rate " + csv::format_real(chain.acceptance_rate) +
                             " after burn-in is below 0.05; step size is too large");
  }
  return chain;
}

void PosteriorEnsemble::merge(const PosteriorEnsemble& other) {
  if (other.samples.empty()) return;
  if (!samples.empty() && !(other.arch() == arch())) {
    throw UsageError("cannot merge ensembles with different architectures");
  }
  const double n0 = static_cast<double>(samples.size());
  const double n1 = static_cast<double>(other.samples.size());
  acceptance_rate = (acceptance_rate * n0 + other.acceptance_rate * n1) / (n0 + n1);
  samples.insert(samples.end(), other.samples.begin(), other.samples.end());
  energies.insert(energies.end(), other.energies.begin(), other.energies.end());
  warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
}

PosteriorEnsemble hmc_sample(const mlp::Architecture& arch, const dataset::LabeledDataset& ds,
                             const PriorSpec& prior, const HmcConfig& cfg, double init_scale,
                             const mlp::MlpParams* start) {
  if (ds.empty()) throw UsageError("cannot sample a posterior from an empty dataset");
  if (!(prior.variance > 0.0)) throw UsageError("prior variance must be positive");
  arch.validate();
  std::vector<double> initial;
  if (start) {
    if (!(start->arch == arch)) throw UsageError("start point has a different architecture");
    initial = start->theta;
  } else {
    initial = mlp::init_params(arch, init_scale, cfg.seed).theta;
  }

  mlp::Evaluator eval(arch, ds);
  const double inv_var = 1.0 / prior.variance;
  const LogDensityFn log_density = [&](std::span<const double> theta, std::span<double> grad) {
    const double loss = eval.loss_and_gradient(theta, grad);
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = -grad[k] - theta[k] * inv_var;
    return -loss - 0.5 * inv_var * squared_norm(theta);
  };
  Chain chain = hmc_chain(log_density, std::move(initial), cfg);

  PosteriorEnsemble ens;
  ens.samples.reserve(chain.samples.size());
  for (auto& theta : chain.samples) ens.samples.push_back({arch, std::move(theta)});
  ens.acceptance_rate = chain.acceptance_rate;
  ens.energies = std::move(chain.energies);
  ens.final_step_size = chain.final_step_size;
  ens.warnings = std::move(chain.warnings);
  return ens;
}

std::vector<double> predictive(const PosteriorEnsemble& ensemble, std::span<const double> x) {
  if (ensemble.samples.empty()) throw UsageError("predictive needs a non-empty ensemble");
  std::vector<double> mean(ensemble.arch().classes(), 0.0);
  for (const auto& member : ensemble.samples) {
    const auto probs = mlp::softmax(mlp::forward_logits(member, x));
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += probs[c];
  }
  for (double& v : mean) v /= static_cast<double>(ensemble.samples.size());
  return mean;
}

std::vector<std::vector<std::vector<double>>> member_probabilities(
    const PosteriorEnsemble& ensemble, std::span<const double> features) {
  std::vector<std::vector<std::vector<double>>> out;
  out.reserve(ensemble.samples.size());
  for (const auto& member : ensemble.samples) out.push_back(mlp::predict_proba(member, features));
  return out;
}

double effective_sample_size(std::span<const double> chain) {
  const std::size_t n = chain.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(chain.begin(), chain.end(), 0.0) / static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (chain[i] - mean) * (chain[i + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (c0 <= 0.0) return static_cast<double>(n);
  // Sum consecutive autocorrelation pairs while they stay positive.
  double tau = -1.0;
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    const double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

void write_ensemble(std::ostream& out, const PosteriorEnsemble& ensemble, const PriorSpec& prior,
                    const HmcConfig& cfg) {
  if (ensemble.samples.empty()) throw UsageError("cannot write an empty ensemble");
  out << "# ctxbnn ensemble\n";
  out << mlp::format_arch_line(ensemble.arch()) << '\n';
  out << "prior_variance " << csv::format_real(prior.variance) << '\n';
  out << "hmc step_size=" << csv::format_real(cfg.step_size)
      << " leapfrog_steps=" << cfg.leapfrog_steps << " samples=" << cfg.samples
      << " burn_in=" << cfg.burn_in << " thinning=" << cfg.thinning << " seed=" << cfg.seed
      << " adapt=" << (cfg.adapt ? 1 : 0) << '\n';
  out << "acceptance_rate " << csv::format_real(ensemble.acceptance_rate) << '\n';
  out << "final_step_size " << csv::format_real(ensemble.final_step_size) << '\n';
  out << "members " << ensemble.samples.size() << '\n';
  for (std::size_t i = 0; i < ensemble.samples.size(); ++i) {
    out << "# member " << i << '\n';
    mlp::write_checkpoint(out, ensemble.samples[i], cfg.seed);
  }
}

namespace {

std::string_view expect_key(std::istream& in, std::string& line, std::size_t& lineno,
                            std::string_view key, const std::string& source) {
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = csv::trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (!t.starts_with(key) || t.size() <= key.size() || t[key.size()] != ' ') {
      throw ParseError(source, lineno, "expected '" + std::string(key) + " ...'");
    }
    return csv::trim(t.substr(key.size() + 1));
  }
  throw ParseError(source, lineno, "unexpected end of file, expected '" + std::string(key) + "'");
}

}  // namespace

EnsembleFile read_ensemble(std::istream& in, const std::string& source) {
  EnsembleFile file;
  std::string line;
  std::size_t lineno = 0;
  // The arch line is validated again inside each member block.
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = csv::trim(line);
    if (t.empty() || t.front() == '#') continue;
    mlp::parse_arch_line(t, source, lineno);
    break;
  }
  file.prior.variance = csv::parse_real(expect_key(in, line, lineno, "prior_variance", source),
                                        source, lineno);
  const auto hmc = expect_key(in, line, lineno, "hmc", source);
  for (auto token : csv::split(hmc, ' ')) {
    const auto eq = token.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, lineno, "bad hmc token");
    const auto key = token.substr(0, eq);
    const auto value = token.substr(eq + 1);
    if (key == "step_size") file.hmc.step_size = csv::parse_real(value, source, lineno);
    else if (key == "leapfrog_steps") file.hmc.leapfrog_steps = csv::parse_uint(value, source, lineno);
    else if (key == "samples") file.hmc.samples = csv::parse_uint(value, source, lineno);
    else if (key == "burn_in") file.hmc.burn_in = csv::parse_uint(value, source, lineno);
    else if (key == "thinning") file.hmc.thinning = csv::parse_uint(value, source, lineno);
    else if (key == "seed") file.hmc.seed = csv::parse_uint(value, source, lineno);
    else if (key == "adapt") file.hmc.adapt = csv::parse_uint(value, source, lineno) != 0;
  }
  file.ensemble.acceptance_rate =
      csv::parse_real(expect_key(in, line, lineno, "acceptance_rate", source), source, lineno);
  file.ensemble.final_step_size =
      csv::parse_real(expect_key(in, line, lineno, "final_step_size", source), source, lineno);
  const auto members =
      csv::parse_uint(expect_key(in, line, lineno, "members", source), source, lineno);
  if (members == 0) throw ParseError(source, lineno, "ensemble has no members");
  for (std::size_t i = 0; i < members; ++i) {
    auto cp = mlp::read_checkpoint(in, source, lineno);
    if (!file.ensemble.samples.empty() && !(cp.params.arch == file.ensemble.arch())) {
      throw ParseError(source, lineno, "member architecture differs from the first member");
    }
    file.ensemble.samples.push_back(std::move(cp.params));
  }
  return file;
}

}  // namespace ctxbnn::bayes
