#include <cmath>
#include <numeric>
#include <sstream>

#include "../support/naive_mlp.hpp"
#include "../support/stats.hpp"
#include "ctxbnn/bayes.hpp"
#include "ctxbnn/errors.hpp"
#include "ctxbnn/rng.hpp"
#include "doctest.h"

using namespace ctxbnn;
using namespace ctxbnn::bayes;
using dataset::LabeledDataset;

namespace {

LabeledDataset random_dataset(std::size_t n, std::size_t dim, Rng& rng) {
  LabeledDataset ds(dim, 2);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    ds.push_back(x, x[0] > 0.0 ? 1 : 0);
  }
  return ds;
}

// log N(x; 0, 1) up to a constant.
const LogDensityFn kStdNormal = [](std::span<const double> q, std::span<double> g) {
  g[0] = -q[0];
  return -0.5 * q[0] * q[0];
};

const GradFn kStdNormalGrad = [](std::span<const double> q, std::span<double> g) {
  for (std::size_t i = 0; i < q.size(); ++i) g[i] = -q[i];
};

std::vector<double> component(const Chain& c, std::size_t k) {
  std::vector<double> out;
  for (const auto& s : c.samples) out.push_back(s[k]);
  return out;
}

}  // namespace

TEST_CASE("log posterior fixtures") {
  Rng rng(1);
  const auto ds = random_dataset(30, 3, rng);
  const mlp::Architecture arch{3, {5, 2}};
  const auto p = mlp::init_params(arch, 1.0, 4);
  const double loss = mlp::cross_entropy_loss(p, ds);
  CHECK(std::abs(log_posterior_unnorm(p, ds, {1e12}) + loss) < 1e-6);

  const auto zero = mlp::MlpParams::zeros(arch);
  CHECK(log_posterior_unnorm(zero, ds, {0.5}) == -mlp::cross_entropy_loss(zero, ds));
  const auto g0 = log_posterior_gradient(zero, ds, {0.5});
  const auto gl = mlp::backprop_gradient(zero, ds);
  for (std::size_t k = 0; k < g0.size(); ++k) CHECK(g0[k] == -gl[k]);

  CHECK_THROWS_AS(log_posterior_unnorm(p, ds, {0.0}), UsageError);
}

TEST_CASE("posterior ratio matches likelihood times prior on a logistic toy model") {
  // Single affine layer on a scalar input: p(y=0|x) = 1 / (1 + exp(z1 - z0)).
  LabeledDataset ds(1, 2);
  const double xs[4] = {-1.0, -0.3, 0.4, 1.2};
  const int ys[4] = {0, 0, 1, 1};
  for (int i = 0; i < 4; ++i) ds.push_back(std::span<const double>(&xs[i], 1), ys[i]);
  const mlp::Architecture arch{1, {2}};
  const double variance = 2.0;

  auto direct = [&](const std::vector<double>& th) {
    double like = 1.0;
    for (int i = 0; i < 4; ++i) {
      const double z0 = th[0] * xs[i] + th[2];
      const double z1 = th[1] * xs[i] + th[3];
      const double p0 = 1.0 / (1.0 + std::exp(z1 - z0));
      like *= ys[i] == 0 ? p0 : 1.0 - p0;
    }
    double sq = 0.0;
    for (double v : th) sq += v * v;
    return like * std::exp(-sq / (2.0 * variance));
  };
  const mlp::MlpParams w1{arch, {0.5, -0.2, 0.1, 0.0}};
  const mlp::MlpParams w2{arch, {-1.0, 1.5, 0.3, -0.4}};
  const double ratio = std::exp(log_posterior_unnorm(w1, ds, {variance}) -
                                log_posterior_unnorm(w2, ds, {variance}));
  CHECK(ratio == doctest::Approx(direct(w1.theta) / direct(w2.theta)).epsilon(1e-12));
}

TEST_CASE("log posterior gradient matches central differences") {
  Rng rng(2);
  for (int trial = 0; trial < 8; ++trial) {
    const mlp::Architecture arch{4, {1 + rng.below(12), 1 + rng.below(6), 2},
                                 trial % 2 ? mlp::Activation::Relu : mlp::Activation::Tanh};
    const auto p = mlp::init_params(arch, 1.5, rng.next_u64());
    const auto ds = random_dataset(20, 4, rng);
    const double variance = 0.3 + rng.uniform01();
    auto grad = log_posterior_gradient(p, ds, {variance});
    std::vector<std::size_t> coords(100);
    for (auto& k : coords) k = rng.below(p.theta.size());
    const auto r = testing::compare_with_central_differences(
        [&](const std::vector<double>& th) {
          auto e = testing::naive_loss(arch, th, ds);
          e.loss = testing::naive_log_posterior(arch, th, ds, variance);
          return e;
        },
        p.theta, grad, coords);
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("log posterior gradient is finite far from the origin") {
  Rng rng(3);
  const auto ds = random_dataset(40, 3, rng);
  mlp::MlpParams p = mlp::MlpParams::zeros({3, {8, 4, 2}});
  for (double& v : p.theta) v = rng.uniform(-5.0, 5.0);
  const auto g = log_posterior_gradient(p, ds, {1.0});
  for (double v : g) CHECK(std::isfinite(v));
}

TEST_CASE("leapfrog") {
  std::vector<double> q = {0.3, -1.2}, p = {0.5, 0.1};
  const auto q0 = q, p0 = p;
  CHECK(leapfrog(q, p, 0.1, 0, kStdNormalGrad));
  CHECK(q == q0);
  CHECK(p == p0);

  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> qs(3), ps(3);
    for (double& v : qs) v = rng.uniform(-3.0, 3.0);
    for (double& v : ps) v = rng.normal();
    auto qq = qs, pp = ps;
    REQUIRE(leapfrog(qq, pp, 0.05, 40, kStdNormalGrad));
    for (double& v : pp) v = -v;
    REQUIRE(leapfrog(qq, pp, 0.05, 40, kStdNormalGrad));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(std::abs(qq[i] - qs[i]) < 1e-8);
      CHECK(std::abs(-pp[i] - ps[i]) < 1e-8);
    }
  }

  std::vector<double> q1 = {1.0}, p1 = {0.7};
  const double h0 = 0.5 * (q1[0] * q1[0] + p1[0] * p1[0]);
  REQUIRE(leapfrog(q1, p1, 0.01, 100, kStdNormalGrad));
  const double h1 = 0.5 * (q1[0] * q1[0] + p1[0] * p1[0]);
  CHECK(std::abs(h1 - h0) < 1e-3);

  const GradFn explode = [](std::span<const double>, std::span<double> g) { g[0] = NAN; };
  std::vector<double> q2 = {1.0}, p2 = {1.0};
  CHECK_FALSE(leapfrog(q2, p2, 0.1, 3, explode));
}

TEST_CASE("HMC recovers a standard normal") {
  HmcConfig cfg;
  cfg.step_size = 0.2;
  cfg.leapfrog_steps = 8;
  cfg.burn_in = 100;
  cfg.samples = 2000;
  cfg.thinning = 1;
  cfg.adapt = false;
  cfg.seed = 17;
  const auto chain = hmc_chain(kStdNormal, {2.0}, cfg);
  REQUIRE(chain.samples.size() == 2000);
  const auto xs = component(chain, 0);
  const double ess = effective_sample_size(xs);
  CHECK(ess > 100.0);
  CHECK(std::abs(testing::mean(xs)) < 3.0 / std::sqrt(ess));
  CHECK(std::abs(testing::covariance(xs, xs) - 1.0) < 0.1);
  CHECK(chain.acceptance_rate > 0.9);

  // Same seed, same chain.
  CHECK(hmc_chain(kStdNormal, {2.0}, cfg).samples == chain.samples);
}

TEST_CASE("HMC recovers a correlated 2-D normal") {
  // Covariance [[1, 0.8], [0.8, 1]]; precision = inverse.
  const double det = 1.0 - 0.64;
  const double a = 1.0 / det, b = -0.8 / det;
  const LogDensityFn target = [=](std::span<const double> q, std::span<double> g) {
    g[0] = -(a * q[0] + b * q[1]);
    g[1] = -(b * q[0] + a * q[1]);
    return -0.5 * (a * q[0] * q[0] + 2 * b * q[0] * q[1] + a * q[1] * q[1]);
  };
  HmcConfig cfg;
  cfg.step_size = 0.1;
  cfg.leapfrog_steps = 15;
  cfg.burn_in = 200;
  cfg.samples = 4000;
  cfg.thinning = 1;
  cfg.seed = 5;
  const auto chain = hmc_chain(target, {0.0, 0.0}, cfg);
  const auto x = component(chain, 0), y = component(chain, 1);
  CHECK(std::abs(testing::covariance(x, x) - 1.0) < 0.15);
  CHECK(std::abs(testing::covariance(y, y) - 1.0) < 0.15);
  CHECK(std::abs(testing::covariance(x, y) - 0.8) < 0.15 * 0.8);
}

TEST_CASE("vanishing step size accepts nearly everything") {
  HmcConfig cfg;
  cfg.step_size = 1e-6;
  cfg.leapfrog_steps = 1;
  cfg.burn_in = 0;
  cfg.samples = 500;
  cfg.thinning = 1;
  cfg.adapt = false;
  const auto chain = hmc_chain(kStdNormal, {0.5}, cfg);
  CHECK(chain.acceptance_rate > 0.99);
  CHECK(chain.warnings.empty());
}

TEST_CASE("oversized steps trigger the low-acceptance warning") {
  const LogDensityFn steep = [](std::span<const double> q, std::span<double> g) {
    g[0] = -1e4 * q[0];
    return -0.5e4 * q[0] * q[0];
  };
  HmcConfig cfg;
  cfg.step_size = 1.0;
  cfg.leapfrog_steps = 5;
  cfg.burn_in = 0;
  cfg.samples = 100;
  cfg.thinning = 1;
  cfg.adapt = false;
  const auto chain = hmc_chain(steep, {0.01}, cfg);
  CHECK(chain.acceptance_rate < kLowAcceptance);
  CHECK(chain.warnings.size() == 1);
}

TEST_CASE("step-size adaptation moves towards the target acceptance") {
  HmcConfig cfg;
  cfg.step_size = 3.0;
  cfg.leapfrog_steps = 5;
  cfg.burn_in = 500;
  cfg.samples = 1000;
  cfg.thinning = 1;
  cfg.seed = 9;
  std::vector<double> start(20, 0.0);
  const LogDensityFn iso = [](std::span<const double> q, std::span<double> g) {
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      g[i] = -q[i];
      s += q[i] * q[i];
    }
    return -0.5 * s;
  };
  const auto chain = hmc_chain(iso, start, cfg);
  CHECK(chain.final_step_size < 3.0);
  CHECK(chain.acceptance_rate > 0.6);
  CHECK(chain.acceptance_rate < 0.95);
}

TEST_CASE("network posterior sampling") {
  Rng rng(6);
  const auto ds = random_dataset(40, 2, rng);
  const mlp::Architecture arch{2, {6, 2}};
  HmcConfig cfg;
  cfg.burn_in = 50;
  cfg.samples = 20;
  cfg.thinning = 2;
  cfg.leapfrog_steps = 10;
  cfg.seed = 3;
  const auto ens = hmc_sample(arch, ds, {1.0}, cfg);
  CHECK(ens.samples.size() == 20);
  CHECK(ens.energies.size() == 20);
  CHECK(ens.acceptance_rate > 0.0);
  for (const auto& s : ens.samples) CHECK(s.arch == arch);
  CHECK(hmc_sample(arch, ds, {1.0}, cfg).samples.back().theta == ens.samples.back().theta);

  for (int t = 0; t < 20; ++t) {
    const double x[2] = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const auto p = predictive(ens, x);
    CHECK(p[0] >= 0.0);
    CHECK(p[1] >= 0.0);
    CHECK(std::abs(p[0] + p[1] - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS(hmc_sample(arch, LabeledDataset(2, 2), {1.0}, cfg), UsageError);
}

TEST_CASE("tight prior collapses the posterior onto the origin") {
  LabeledDataset ds(2, 2);
  const double a[2] = {0.5, 0.5}, b[2] = {-0.5, -0.5};
  ds.push_back(a, 0);
  ds.push_back(b, 1);
  const mlp::Architecture arch{2, {4, 2}};
  HmcConfig cfg;
  cfg.step_size = 1e-4;
  cfg.burn_in = 100;
  cfg.samples = 30;
  cfg.thinning = 2;
  const auto ens = hmc_sample(arch, ds, {1e-6}, cfg);
  for (const auto& s : ens.samples) {
    for (double v : s.theta) CHECK(std::abs(v) < 0.01);
  }
  const auto p = predictive(ens, a);
  CHECK(std::abs(p[0] - 0.5) < 1e-3);
}

TEST_CASE("predictive averages member outputs") {
  const mlp::Architecture arch{1, {2}};
  const mlp::MlpParams first{arch, {0.0, 0.0, 800.0, -800.0}};   // outputs (1, 0)
  const mlp::MlpParams second{arch, {0.0, 0.0, -800.0, 800.0}};  // outputs (0, 1)
  const double x[1] = {0.3};

  PosteriorEnsemble one;
  one.samples = {first};
  CHECK(predictive(one, x) == mlp::softmax(mlp::forward_logits(first, x)));

  PosteriorEnsemble two;
  two.samples = {first, second};
  CHECK(predictive(two, x) == std::vector<double>{0.5, 0.5});

  const mlp::MlpParams mid{arch, {0.4, -0.1, 0.2, 0.3}};
  PosteriorEnsemble same;
  same.samples = {mid, mid, mid};
  const auto expect = mlp::softmax(mlp::forward_logits(mid, x));
  const auto got = predictive(same, x);
  for (int c = 0; c < 2; ++c) CHECK(got[c] == doctest::Approx(expect[c]).epsilon(1e-15));

  CHECK_THROWS_AS(predictive(PosteriorEnsemble{}, x), UsageError);
}

TEST_CASE("effective sample size") {
  Rng rng(8);
  std::vector<double> iid(4000);
  for (double& v : iid) v = rng.normal();
  CHECK(effective_sample_size(iid) > 3000.0);
  // AR(1) with rho = 0.9 has ESS ~ n (1 - rho) / (1 + rho).
  std::vector<double> ar(4000);
  ar[0] = 0.0;
  for (std::size_t i = 1; i < ar.size(); ++i) ar[i] = 0.9 * ar[i - 1] + rng.normal();
  const double ess = effective_sample_size(ar);
  CHECK(ess > 100.0);
  CHECK(ess < 500.0);
}

TEST_CASE("ensemble file round trip") {
  Rng rng(10);
  const auto ds = random_dataset(20, 2, rng);
  HmcConfig cfg;
  cfg.burn_in = 10;
  cfg.samples = 3;
  cfg.thinning = 1;
  cfg.leapfrog_steps = 3;
  cfg.seed = 77;
  const auto ens = hmc_sample({2, {3, 2}}, ds, {0.5}, cfg);
  std::stringstream ss;
  write_ensemble(ss, ens, {0.5}, cfg);
  const auto back = read_ensemble(ss);
  CHECK(back.prior.variance == 0.5);
  CHECK(back.hmc.seed == 77);
  CHECK(back.hmc.samples == 3);
  CHECK(back.ensemble.acceptance_rate == ens.acceptance_rate);
  REQUIRE(back.ensemble.samples.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back.ensemble.samples[i].theta == ens.samples[i].theta);

  PosteriorEnsemble merged = ens;
  merged.merge(ens);
  CHECK(merged.samples.size() == 6);
  CHECK(merged.acceptance_rate == doctest::Approx(ens.acceptance_rate));
}
