#include "ctxbnn/mlp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "ctxbnn/csv.hpp"
#include "ctxbnn/errors.hpp"
#include "ctxbnn/rng.hpp"

namespace ctxbnn::mlp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

// -log(1e-300): per-sample loss ceiling.
const double kMaxSampleLoss = -std::log(1e-300);

struct LayerShape {
  std::size_t in;
  std::size_t out;
  std::size_t offset;  // start of the weight block in theta; bias follows
};

std::vector<LayerShape> layer_shapes(const Architecture& arch) {
  std::vector<LayerShape> shapes;
  std::size_t in = arch.input_dim;
  std::size_t offset = 0;
  for (std::size_t out : arch.layer_sizes) {
    shapes.push_back({in, out, offset});
    offset += in * out + out;
    in = out;
  }
  return shapes;
}

void apply_activation(RowMat& z, Activation act) {
  if (act == Activation::Relu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

// Forward pass keeping every layer's post-activation output in acts[l+1];
// acts[0] is the input batch. The last entry holds raw logits.
// Weights are copied into owned (aligned) storage first: Eigen's vectorized
// products on a Map pick their kernel split from the pointer alignment, which
// would make results depend on where theta happens to live.
void forward_pass(const Architecture& arch, const std::vector<LayerShape>& shapes,
                  std::span<const double> theta, std::vector<RowMat>& acts,
                  std::vector<RowMat>& weights) {
  acts.resize(shapes.size() + 1);
  weights.resize(shapes.size());
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    weights[l] = ConstMatMap(theta.data() + s.offset, static_cast<Eigen::Index>(s.out),
                             static_cast<Eigen::Index>(s.in));
    ConstVecMap b(theta.data() + s.offset + s.in * s.out, static_cast<Eigen::Index>(s.out));
    acts[l + 1].noalias() = acts[l] * weights[l].transpose();
    acts[l + 1].rowwise() += b.transpose();
    if (l + 1 < shapes.size()) apply_activation(acts[l + 1], arch.activation);
  }
}

void check_theta(const Architecture& arch, std::span<const double> theta) {
  if (theta.size() != arch.param_count()) {
    throw UsageError("theta has " + std::to_string(theta.size()) + " entries, architecture " +
                     arch.label() + " needs " + std::to_string(arch.param_count()));
  }
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw UsageError("unknown activation '" + std::string(name) + "'");
}

void Architecture::validate() const {
  if (input_dim == 0) throw UsageError("input dimension must be positive");
  if (layer_sizes.empty()) throw UsageError("architecture needs at least one layer");
  for (std::size_t w : layer_sizes) {
    if (w == 0) throw UsageError("layer widths must be positive");
  }
  if (layer_sizes.back() < 2) throw UsageError("output layer needs at least 2 classes");
}

std::size_t Architecture::param_count() const {
  std::size_t count = 0;
  std::size_t in = input_dim;
  for (std::size_t out : layer_sizes) {
    count += in * out + out;
    in = out;
  }
  return count;
}

std::string Architecture::label() const {
  std::string s;
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(layer_sizes[i]);
  }
  return s;
}

std::vector<std::size_t> parse_layers(std::string_view text) {
  std::vector<std::size_t> out;
  const char sep = text.find(',') != std::string_view::npos ? ',' : '-';
  for (auto f : csv::split(text, sep)) {
    const auto v = csv::parse_int(f, "layers", 1);
    if (v <= 0) throw UsageError("layer widths must be positive: " + std::string(text));
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

MlpParams MlpParams::zeros(Architecture arch) {
  arch.validate();
  const std::size_t n = arch.param_count();
  return {std::move(arch), std::vector<double>(n, 0.0)};
}

MlpParams init_params(const Architecture& arch, double init_scale, std::uint64_t seed) {
  if (!(init_scale > 0.0)) throw UsageError("init scale must be positive");
  MlpParams p = MlpParams::zeros(arch);
  Rng rng(seed);
  for (const auto& s : layer_shapes(arch)) {
    const double bound = init_scale / std::sqrt(static_cast<double>(s.in));
    for (std::size_t k = 0; k < s.in * s.out; ++k) p.theta[s.offset + k] = rng.uniform(-bound, bound);
  }
  return p;
}

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out(z.size());
  if (z.empty()) return out;
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> forward_logits(const MlpParams& p, std::span<const double> x) {
  p.arch.validate();
  check_theta(p.arch, p.theta);
  if (x.size() != p.arch.input_dim) {
    throw UsageError("input has dimension " + std::to_string(x.size()) + ", expected " +
                     std::to_string(p.arch.input_dim));
  }
  const auto shapes = layer_shapes(p.arch);
  std::vector<RowMat> acts(1);
  acts[0] = ConstMatMap(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  std::vector<RowMat> weights;
  forward_pass(p.arch, shapes, p.theta, acts, weights);
  const auto& z = acts.back();
  return {z.data(), z.data() + z.size()};
}

std::vector<std::vector<double>> predict_proba(const MlpParams& p,
                                               std::span<const double> features) {
  check_theta(p.arch, p.theta);
  const std::size_t d = p.arch.input_dim;
  if (features.size() % d != 0) throw UsageError("feature matrix width mismatch");
  const auto shapes = layer_shapes(p.arch);
  std::vector<RowMat> acts(1);
  acts[0] = ConstMatMap(features.data(), static_cast<Eigen::Index>(features.size() / d),
                        static_cast<Eigen::Index>(d));
  std::vector<RowMat> weights;
  forward_pass(p.arch, shapes, p.theta, acts, weights);
  const auto& z = acts.back();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    out[static_cast<std::size_t>(r)] =
        softmax(std::span<const double>(z.data() + r * z.cols(), static_cast<std::size_t>(z.cols())));
  }
  return out;
}

Prediction predict(const MlpParams& p, std::span<const double> x) {
  Prediction out;
  out.probs = softmax(forward_logits(p, x));
  out.predicted = argmax(out.probs);
  out.entropy = entropy(out.probs);
  return out;
}

struct Evaluator::Impl {
  Architecture arch;
  std::vector<LayerShape> shapes;
  RowMat inputs;
  std::vector<int> labels;
  std::vector<RowMat> acts;
  std::vector<RowMat> weights;
  RowMat delta;
  RowMat delta_prev;
  RowMat grad_w;
  Eigen::VectorXd grad_b;
};

Evaluator::Evaluator(Architecture arch, const dataset::LabeledDataset& ds)
    : impl_(std::make_unique<Impl>()) {
  arch.validate();
  if (ds.dim() != arch.input_dim && !ds.empty()) {
    throw UsageError("dataset dimension " + std::to_string(ds.dim()) + " != network input " +
                     std::to_string(arch.input_dim));
  }
  if (!ds.empty() && ds.classes() > arch.classes()) {
    throw UsageError("dataset has more classes than the output layer");
  }
  impl_->shapes = layer_shapes(arch);
  impl_->arch = std::move(arch);
  impl_->inputs = ConstMatMap(ds.features().data(), static_cast<Eigen::Index>(ds.size()),
                              static_cast<Eigen::Index>(impl_->arch.input_dim));
  impl_->labels = ds.labels();
}

Evaluator::~Evaluator() = default;
Evaluator::Evaluator(Evaluator&&) noexcept = default;
Evaluator& Evaluator::operator=(Evaluator&&) noexcept = default;

const Architecture& Evaluator::arch() const { return impl_->arch; }

double Evaluator::loss_and_gradient(std::span<const double> theta, std::span<double> grad,
                                    std::span<const std::size_t> rows) {
  Impl& m = *impl_;
  check_theta(m.arch, theta);
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != theta.size()) throw UsageError("gradient buffer size mismatch");

  auto& acts = m.acts;
  acts.resize(m.shapes.size() + 1);
  std::vector<int> batch_labels;
  const std::vector<int>* labels = &m.labels;
  if (rows.empty()) {
    acts[0] = m.inputs;
  } else {
    acts[0].resize(static_cast<Eigen::Index>(rows.size()), m.inputs.cols());
    batch_labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      acts[0].row(static_cast<Eigen::Index>(i)) = m.inputs.row(static_cast<Eigen::Index>(rows[i]));
      batch_labels[i] = m.labels[rows[i]];
    }
    labels = &batch_labels;
  }
  const auto n = acts[0].rows();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  if (n == 0) return 0.0;

  forward_pass(m.arch, m.shapes, theta, acts, m.weights);

  // Output layer: log-softmax loss and dL/dz = softmax - onehot.
  RowMat& delta = m.delta;
  delta = acts.back();
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    auto z = delta.row(r);
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    const int y = (*labels)[static_cast<std::size_t>(r)];
    const double sample_loss = lse - z(y);
    if (sample_loss >= kMaxSampleLoss) {
      loss += kMaxSampleLoss;
      z.setZero();  // clipped term is constant in theta
      continue;
    }
    loss += sample_loss;
    if (want_grad) {
      z = (z.array() - lse).exp().matrix();
      z(y) -= 1.0;
    }
  }
  if (!want_grad) return loss;

  for (std::size_t l = m.shapes.size(); l-- > 0;) {
    const auto& s = m.shapes[l];
    MatMap gw(grad.data() + s.offset, static_cast<Eigen::Index>(s.out),
              static_cast<Eigen::Index>(s.in));
    VecMap gb(grad.data() + s.offset + s.in * s.out, static_cast<Eigen::Index>(s.out));
    m.grad_w.noalias() = delta.transpose() * acts[l];
    gw = m.grad_w;
    m.grad_b.noalias() = delta.colwise().sum().transpose();
    gb = m.grad_b;
    if (l == 0) break;
    m.delta_prev.noalias() = delta * m.weights[l];
    const auto& a = acts[l];
    if (m.arch.activation == Activation::Relu) {
      m.delta_prev.array() *= (a.array() > 0.0).cast<double>();
    } else {
      m.delta_prev.array() *= 1.0 - a.array().square();
    }
    std::swap(delta, m.delta_prev);
  }
  return loss;
}

double cross_entropy_loss(const MlpParams& p, const dataset::LabeledDataset& ds) {
  Evaluator eval(p.arch, ds);
  return eval.loss_and_gradient(p.theta, {});
}

std::vector<double> backprop_gradient(const MlpParams& p, const dataset::LabeledDataset& ds) {
  Evaluator eval(p.arch, ds);
  std::vector<double> grad(p.theta.size());
  eval.loss_and_gradient(p.theta, grad);
  return grad;
}

MlpParams train(const Architecture& arch, const dataset::LabeledDataset& ds,
                const TrainConfig& cfg, TrainLog* log) {
  if (ds.empty()) throw UsageError("cannot train on an empty dataset");
  if (!(cfg.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (cfg.batch_size == 0) throw UsageError("batch size must be positive");

  MlpParams p = init_params(arch, cfg.init_scale, cfg.seed);
  Evaluator eval(arch, ds);
  Rng rng(Rng::mix(cfg.seed, 1));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(p.theta.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const double batch_loss =
          eval.loss_and_gradient(p.theta, grad, std::span<const std::size_t>(order).subspan(start, len));
      if (!std::isfinite(batch_loss)) {
        throw NumericDivergence("training loss became non-finite at epoch " +
                                std::to_string(epoch));
      }
      epoch_loss += batch_loss;
      const double step = cfg.learning_rate / static_cast<double>(len);
      for (std::size_t k = 0; k < p.theta.size(); ++k) p.theta[k] -= step * grad[k];
    }
    for (double v : p.theta) {
      if (!std::isfinite(v)) {
        throw NumericDivergence("parameters became non-finite at epoch " + std::to_string(epoch));
      }
    }
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(ds.size()));
  }
  return p;
}

std::string format_arch_line(const Architecture& arch) {
  std::string layers;
  for (std::size_t i = 0; i < arch.layer_sizes.size(); ++i) {
    if (i) layers += ',';
    layers += std::to_string(arch.layer_sizes[i]);
  }
  return "arch input=" + std::to_string(arch.input_dim) + " layers=" + layers +
         " activation=" + to_string(arch.activation);
}

Architecture parse_arch_line(std::string_view line, const std::string& source,
                             std::size_t lineno) {
  const auto tokens = csv::split(csv::trim(line), ' ');
  if (tokens.empty() || tokens[0] != "arch") throw ParseError(source, lineno, "expected 'arch' line");
  Architecture arch;
  bool have_input = false, have_layers = false;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto eq = tokens[i].find('=');
    if (eq == std::string_view::npos) throw ParseError(source, lineno, "bad arch token");
    const auto key = tokens[i].substr(0, eq);
    const auto value = tokens[i].substr(eq + 1);
    if (key == "input") {
      arch.input_dim = static_cast<std::size_t>(csv::parse_uint(value, source, lineno));
      have_input = true;
    } else if (key == "layers") {
      try {
        arch.layer_sizes = parse_layers(value);
      } catch (const std::exception& e) {
        throw ParseError(source, lineno, e.what());
      }
      have_layers = true;
    } else if (key == "activation") {
      try {
        arch.activation = parse_activation(value);
      } catch (const std::exception& e) {
        throw ParseError(source, lineno, e.what());
      }
    }
  }
  if (!have_input || !have_layers) throw ParseError(source, lineno, "arch needs input= and layers=");
  try {
    arch.validate();
  } catch (const std::exception& e) {
    throw ParseError(source, lineno, e.what());
  }
  return arch;
}

void write_checkpoint(std::ostream& out, const MlpParams& p, std::uint64_t seed) {
  out << "# ctxbnn checkpoint\n";
  out << format_arch_line(p.arch) << '\n';
  out << "seed " << seed << '\n';
  out << "theta " << p.theta.size() << '\n';
  for (double v : p.theta) out << csv::format_real(v) << '\n';
}

namespace {

bool next_content_line(std::istream& in, std::string& line, std::size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = csv::trim(line);
    if (!t.empty() && t.front() != '#') return true;
  }
  return false;
}

}  // namespace

Checkpoint read_checkpoint(std::istream& in, const std::string& source, std::size_t& lineno) {
  std::string line;
  auto require = [&](const char* what) {
    if (!next_content_line(in, line, lineno)) {
      throw ParseError(source, lineno, std::string("unexpected end of file, expected ") + what);
    }
  };
  Checkpoint cp;
  require("arch line");
  cp.params.arch = parse_arch_line(line, source, lineno);
  require("seed line");
  auto t = csv::trim(line);
  if (!t.starts_with("seed ")) throw ParseError(source, lineno, "expected 'seed <int>'");
  cp.seed = csv::parse_uint(t.substr(5), source, lineno);
  require("theta line");
  t = csv::trim(line);
  if (!t.starts_with("theta ")) throw ParseError(source, lineno, "expected 'theta <count>'");
  const auto count = csv::parse_uint(t.substr(6), source, lineno);
  if (count != cp.params.arch.param_count()) {
    throw ParseError(source, lineno, "theta count does not match architecture");
  }
  cp.params.theta.resize(count);
  for (auto& v : cp.params.theta) {
    require("parameter value");
    v = csv::parse_real(line, source, lineno);
  }
  return cp;
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
  std::size_t lineno = 0;
  return read_checkpoint(in, source, lineno);
}

}  // namespace ctxbnn::mlp
