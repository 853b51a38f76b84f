#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctxbnn/dataset.hpp"
#include "ctxbnn/errors.hpp"
#include "ctxbnn/ncycle.hpp"
#include "doctest.h"

using namespace ctxbnn;
using namespace ctxbnn::dataset;

namespace {

// P(uniform [-1,1]^10 draw is non-disturbing) = E prod_j (1 - max(|b_j|, |b_{j+1}|)),
// estimated offline from 1e8 draws of that 5-dimensional integrand
// (standard error 3.1e-6).
constexpr double kAcceptanceRate = 0.010936410959930238;

void check_rows_valid(const LabeledDataset& ds) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto b = ncycle::Behaviour::from_flat(ds.row(i));
    REQUIRE(ncycle::is_nondisturbing(b));
    CHECK(static_cast<int>(ncycle::kcbs_label(b)) == ds.label(i));
    for (double v : ds.row(i)) CHECK((v >= -1.0 && v <= 1.0));
  }
}

}  // namespace

TEST_CASE("behaviour datasets have the requested size and valid labels") {
  const auto small = sample_behaviour_dataset(500, 1);
  CHECK(small.size() == 500);
  CHECK(small.dim() == 10);
  CHECK(small.classes() == 2);
  check_rows_valid(small);

  const auto test_set = sample_behaviour_dataset(4000, 2);
  CHECK(test_set.size() == 4000);
  check_rows_valid(test_set);

  CHECK(sample_behaviour_dataset(500, 1) == small);
  CHECK_FALSE(sample_behaviour_dataset(500, 3) == small);
  CHECK_THROWS_AS(sample_behaviour_dataset(0, 1), UsageError);
}

TEST_CASE("acceptance rate matches the Monte Carlo volume estimate") {
  const auto ds = sample_behaviour_dataset(20000, 77);
  const double draws = std::stod(ds.meta().params.at("draws"));
  const double rate = static_cast<double>(ds.size()) / draws;
  const double se = std::sqrt(kAcceptanceRate * (1.0 - kAcceptanceRate) / draws);
  CHECK(std::abs(rate - kAcceptanceRate) < 5.0 * se);
}

TEST_CASE("stratified behaviour sampling hits the class quota") {
  const auto ds = sample_behaviour_dataset(400, 9, 0.5);
  CHECK(ds.size() == 400);
  const auto counts = ds.class_counts();
  CHECK(counts[0] == 200);
  CHECK(counts[1] == 200);
  check_rows_valid(ds);
  CHECK(sample_behaviour_dataset(400, 9, 0.5) == ds);
  CHECK(sample_behaviour_dataset(10, 9, 0.0).class_counts()[1] == 0);
  CHECK_THROWS_AS(sample_behaviour_dataset(10, 9, 1.5), UsageError);
}

TEST_CASE("rhombus labels") {
  CHECK(rhombus_label(0.0, 0.0) == 0);
  CHECK(rhombus_label(0.9, 0.9) == 1);
  CHECK(rhombus_label(1.0, 0.0) == 0);  // boundary belongs to the rhombus
  CHECK(rhombus_label(-0.5, -0.5) == 0);
  CHECK(rhombus_label(-0.5, -0.6) == 1);
}

TEST_CASE("uniform rhombus sampling is balanced") {
  const std::size_t n = 100000;
  const auto ds = sample_rhombus_dataset(n, std::nullopt, 4);
  CHECK(ds.size() == n);
  const double frac0 = static_cast<double>(ds.class_counts()[0]) / static_cast<double>(n);
  CHECK(std::abs(frac0 - 0.5) < 5.0 * std::sqrt(0.25 / static_cast<double>(n)));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.row(i);
    CHECK(ds.label(i) == rhombus_label(x[0], x[1]));
  }
}

TEST_CASE("biased rhombus sampling undersamples the box") {
  const std::size_t n = 200000;
  const auto bias = lower_left_bias(1.0 / 50.0);
  const auto ds = sample_rhombus_dataset(n, bias, 6);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) inside += bias.region.contains(ds.row(i));
  // Box area 1 at density 1/50 against area 3 at density 1.
  const double expected = (1.0 / 50.0) / (3.0 + 1.0 / 50.0);
  CHECK(expected == doctest::Approx(0.0066).epsilon(0.01));
  const double frac = static_cast<double>(inside) / static_cast<double>(n);
  CHECK(std::abs(frac - expected) < 5.0 * std::sqrt(expected * (1 - expected) / n));
  // Every point stays inside the square.
  for (double v : ds.features()) CHECK((v >= -1.0 && v <= 1.0));

  BiasSpec bad = bias;
  bad.density_ratio = 0.0;
  CHECK_THROWS_AS(sample_rhombus_dataset(10, bad, 1), UsageError);
}

TEST_CASE("split") {
  LabeledDataset ds(1, 10);
  for (int i = 0; i < 10; ++i) {
    const double x = i;
    ds.push_back(std::span<const double>(&x, 1), i);
  }
  const auto [train, test] = split(ds, 0.8, 3);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  std::vector<int> all = train.labels();
  all.insert(all.end(), test.labels().begin(), test.labels().end());
  std::sort(all.begin(), all.end());
  CHECK(all == ds.labels());
  const auto again = split(ds, 0.8, 3);
  CHECK(again.first == train);
  CHECK(again.second == test);
  CHECK_THROWS_AS(split(ds, 0.0, 1), UsageError);
  CHECK_THROWS_AS(split(ds, 1.0, 1), UsageError);
  CHECK_THROWS_AS(split(LabeledDataset(1, 2), 0.5, 1), UsageError);
}

TEST_CASE("dataset file round trip and errors") {
  const auto ds = sample_behaviour_dataset(50, 12);
  std::stringstream ss;
  write_dataset(ds, ss);
  const std::string text = ss.str();
  CHECK(text.rfind("# task=kcbs d=10 C=2 seed=12 n=50", 0) == 0);
  const auto back = read_dataset(ss);
  CHECK(back == ds);

  std::stringstream bad("# task=kcbs d=10 C=2 seed=1 n=2\n"
                        "0,0,0,0,0,0,0,0,0,0,0\n"
                        "0,0,0,0,0,0,0,0,0,0\n");
  try {
    read_dataset(bad, "bad.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
  }

  std::stringstream empty("");
  CHECK(read_dataset(empty).empty());
}
