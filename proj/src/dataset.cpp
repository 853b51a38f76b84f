#include "ctxbnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ctxbnn/csv.hpp"
#include "ctxbnn/errors.hpp"
#include "ctxbnn/ncycle.hpp"
#include "ctxbnn/rng.hpp"

namespace ctxbnn::dataset {

LabeledDataset::LabeledDataset(std::size_t dim, std::size_t classes, DatasetMeta meta)
    : dim_(dim), classes_(classes), meta_(std::move(meta)) {}

void LabeledDataset::push_back(std::span<const double> x, int label) {
  if (x.size() != dim_) {
    throw UsageError("feature dimension " + std::to_string(x.size()) + " != " +
                     std::to_string(dim_));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= classes_) {
    throw UsageError("label " + std::to_string(label) + " outside [0, " +
                     std::to_string(classes_) + ")");
  }
  features_.insert(features_.end(), x.begin(), x.end());
  labels_.push_back(label);
}

void LabeledDataset::reserve(std::size_t n) {
  features_.reserve(n * dim_);
  labels_.reserve(n);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out(dim_, classes_, meta_);
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(row(i), labels_[i]);
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(classes_, 0);
  for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

bool Box::contains(std::span<const double> x) const {
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  }
  return true;
}

double Box::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < lo.size(); ++i) v *= std::max(0.0, hi[i] - lo[i]);
  return v;
}

namespace {

LabeledDataset sample_behaviours(std::size_t n_samples, std::uint64_t seed,
                                 std::optional<double> contextual_fraction) {
  if (n_samples == 0) throw UsageError("n_samples must be positive");
  constexpr std::size_t kCycle = 5;
  DatasetMeta meta{"kcbs", seed, {{"rng", std::string(Rng::kAlgorithm)}, {"domain", "-1:1"}}};
  std::size_t quota[2] = {n_samples, n_samples};
  if (contextual_fraction) {
    if (!(*contextual_fraction >= 0.0 && *contextual_fraction <= 1.0)) {
      throw UsageError("contextual fraction must lie in [0, 1]");
    }
    quota[1] = static_cast<std::size_t>(
        std::llround(static_cast<double>(n_samples) * *contextual_fraction));
    quota[0] = n_samples - quota[1];
    meta.params["contextual_fraction"] = csv::format_real(*contextual_fraction);
  }
  LabeledDataset ds(2 * kCycle, 2, std::move(meta));
  ds.reserve(n_samples);

  Rng rng(seed);
  std::vector<double> flat(2 * kCycle);
  std::size_t have[2] = {0, 0};
  std::uint64_t attempts = 0;
  std::uint64_t feasible = 0;
  while (ds.size() < n_samples) {
    ++attempts;
    for (double& v : flat) v = rng.uniform(-1.0, 1.0);
    if (ncycle::is_nondisturbing(std::span<const double>(flat))) {
      ++feasible;
      const int label = static_cast<int>(ncycle::kcbs_label(ncycle::Behaviour::from_flat(flat)));
      if (have[label] < quota[label]) {
        ++have[label];
        ds.push_back(flat, label);
      }
    }
    if (attempts >= 10'000'000 &&
        static_cast<double>(feasible) < kMinAcceptanceRate * static_cast<double>(attempts)) {
      throw std::logic_error("behaviour rejection sampler accepted " + std::to_string(feasible) +
                             " of " + std::to_string(attempts) +
                             " draws; non-disturbance check is broken");
    }
  }
  ds.meta().params["draws"] = std::to_string(attempts);
  return ds;
}

}  // namespace

LabeledDataset sample_behaviour_dataset(std::size_t n_samples, std::uint64_t seed) {
  return sample_behaviours(n_samples, seed, std::nullopt);
}

LabeledDataset sample_behaviour_dataset(std::size_t n_samples, std::uint64_t seed,
                                        double contextual_fraction) {
  return sample_behaviours(n_samples, seed, contextual_fraction);
}

int rhombus_label(double x, double y) { return std::abs(x) + std::abs(y) <= 1.0 ? 0 : 1; }

namespace {

struct WeightedBox {
  Box box;
  double weight;
};

// The square [-1,1]^2 cut into the (clipped) bias region and up to four
// boxes covering its complement.
std::vector<WeightedBox> square_partition(const BiasSpec& bias) {
  if (bias.region.lo.size() != 2 || bias.region.hi.size() != 2) {
    throw UsageError("rhombus bias region must be 2-dimensional");
  }
  if (!(bias.density_ratio > 0.0)) throw UsageError("bias density ratio must be positive");
  const double x0 = std::clamp(bias.region.lo[0], -1.0, 1.0);
  const double x1 = std::clamp(bias.region.hi[0], -1.0, 1.0);
  const double y0 = std::clamp(bias.region.lo[1], -1.0, 1.0);
  const double y1 = std::clamp(bias.region.hi[1], -1.0, 1.0);
  if (x1 <= x0 || y1 <= y0) return {{Box{{-1.0, -1.0}, {1.0, 1.0}}, 4.0}};

  std::vector<WeightedBox> parts;
  auto add = [&](Box b, double density) {
    const double v = b.volume();
    if (v > 0.0) parts.push_back({std::move(b), v * density});
  };
  add({{x0, y0}, {x1, y1}}, bias.density_ratio);
  add({{-1.0, -1.0}, {x0, 1.0}}, 1.0);
  add({{x1, -1.0}, {1.0, 1.0}}, 1.0);
  add({{x0, -1.0}, {x1, y0}}, 1.0);
  add({{x0, y1}, {x1, 1.0}}, 1.0);
  return parts;
}

}  // namespace

LabeledDataset sample_rhombus_dataset(std::size_t n_samples, const std::optional<BiasSpec>& bias,
                                      std::uint64_t seed) {
  if (n_samples == 0) throw UsageError("n_samples must be positive");
  DatasetMeta meta{"rhombus", seed, {{"rng", std::string(Rng::kAlgorithm)}}};
  std::vector<WeightedBox> parts;
  if (bias) {
    parts = square_partition(*bias);
    meta.params["bias_lo"] = csv::format_real(bias->region.lo[0]) + ":" +
                             csv::format_real(bias->region.lo[1]);
    meta.params["bias_hi"] = csv::format_real(bias->region.hi[0]) + ":" +
                             csv::format_real(bias->region.hi[1]);
    meta.params["bias_ratio"] = csv::format_real(bias->density_ratio);
  } else {
    parts = {{Box{{-1.0, -1.0}, {1.0, 1.0}}, 4.0}};
  }
  double total = 0.0;
  for (const auto& p : parts) total += p.weight;

  LabeledDataset ds(2, 2, std::move(meta));
  ds.reserve(n_samples);
  Rng rng(seed);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double u = rng.uniform01() * total;
    std::size_t k = 0;
    double acc = parts[0].weight;
    while (u >= acc && k + 1 < parts.size()) acc += parts[++k].weight;
    const Box& b = parts[k].box;
    const double point[2] = {rng.uniform(b.lo[0], b.hi[0]), rng.uniform(b.lo[1], b.hi[1])};
    ds.push_back(point, rhombus_label(point[0], point[1]));
  }
  return ds;
}

BiasSpec lower_left_bias(double density_ratio) {
  return {Box{{-1.0, -1.0}, {0.0, 0.0}}, density_ratio};
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                std::uint64_t seed) {
  if (ds.empty()) throw UsageError("cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw UsageError("train fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  const auto n_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(ds.size()) * train_fraction));
  const std::span<const std::size_t> all(idx);
  return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

void write_dataset(const LabeledDataset& ds, std::ostream& out) {
  out << "# task=" << ds.meta().task << " d=" << ds.dim() << " C=" << ds.classes()
      << " seed=" << ds.meta().seed << " n=" << ds.size();
  for (const auto& [k, v] : ds.meta().params) out << ' ' << k << '=' << v;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) out << csv::format_real(v) << ',';
    out << ds.label(i) << '\n';
  }
}

void write_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ostringstream out;
  write_dataset(ds, out);
  csv::write_text(path, out.str());
}

LabeledDataset read_dataset(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<LabeledDataset> ds;
  std::size_t declared_n = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = csv::trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      if (ds) throw ParseError(source, lineno, "header must precede data rows");
      DatasetMeta meta;
      std::size_t dim = 0, classes = 0;
      bool have_dim = false, have_classes = false;
      for (auto token : csv::split(text.substr(1), ' ')) {
        if (token.empty()) continue;
        const auto eq = token.find('=');
        if (eq == std::string_view::npos) {
          throw ParseError(source, lineno, "header token without '=': " + std::string(token));
        }
        const auto key = token.substr(0, eq);
        const auto value = token.substr(eq + 1);
        if (key == "task") {
          meta.task = std::string(value);
        } else if (key == "d") {
          dim = static_cast<std::size_t>(csv::parse_int(value, source, lineno));
          have_dim = true;
        } else if (key == "C") {
          classes = static_cast<std::size_t>(csv::parse_int(value, source, lineno));
          have_classes = true;
        } else if (key == "seed") {
          meta.seed = csv::parse_uint(value, source, lineno);
        } else if (key == "n") {
          declared_n = static_cast<std::size_t>(csv::parse_int(value, source, lineno));
        } else {
          meta.params[std::string(key)] = std::string(value);
        }
      }
      if (!have_dim || !have_classes) throw ParseError(source, lineno, "header needs d= and C=");
      ds.emplace(dim, classes, std::move(meta));
      continue;
    }
    if (!ds) throw ParseError(source, lineno, "data row before '# task=...' header");
    const auto fields = csv::split(text);
    if (fields.size() != ds->dim() + 1) {
      throw ParseError(source, lineno,
                       "expected " + std::to_string(ds->dim() + 1) + " fields, got " +
                           std::to_string(fields.size()));
    }
    row.resize(ds->dim());
    for (std::size_t i = 0; i < ds->dim(); ++i) row[i] = csv::parse_real(fields[i], source, lineno);
    const auto label = csv::parse_int(fields.back(), source, lineno);
    if (label < 0 || static_cast<std::size_t>(label) >= ds->classes()) {
      throw ParseError(source, lineno, "label out of range");
    }
    ds->push_back(row, static_cast<int>(label));
  }
  if (!ds) return LabeledDataset{};
  if (ds->size() != declared_n) {
    throw ParseError(source, lineno,
                     "header declares n=" + std::to_string(declared_n) + " but file has " +
                         std::to_string(ds->size()) + " rows");
  }
  return std::move(*ds);
}

LabeledDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset(in, path.string());
}

}  // namespace ctxbnn::dataset
