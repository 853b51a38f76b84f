#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ctxbnn::dataset {

struct DatasetMeta {
  std::string task;
  std::uint64_t seed = 0;
  /// Extra generation parameters, serialized as key=value header tokens.
  std::map<std::string, std::string> params;

  bool operator==(const DatasetMeta&) const = default;
};

/// Row-major feature matrix with integer class labels.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::size_t dim, std::size_t classes, DatasetMeta meta = {});

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t classes() const noexcept { return classes_; }

  std::span<const double> row(std::size_t i) const {
    return {features_.data() + i * dim_, dim_};
  }
  int label(std::size_t i) const { return labels_[i]; }

  const std::vector<double>& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  DatasetMeta& meta() noexcept { return meta_; }
  const DatasetMeta& meta() const noexcept { return meta_; }

  void push_back(std::span<const double> x, int label);
  void reserve(std::size_t n);

  /// Copy of the rows at the given indices, same dim/classes/meta.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  /// Count of samples with each label.
  std::vector<std::size_t> class_counts() const;

  bool operator==(const LabeledDataset&) const = default;

 private:
  std::size_t dim_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
  DatasetMeta meta_;
};

/// Axis-aligned box [lo_0, hi_0] x [lo_1, hi_1] x ...
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  bool contains(std::span<const double> x) const;
  double volume() const;
};

/// Sampling density inside `region` relative to density outside it.
struct BiasSpec {
  Box region;
  double density_ratio = 1.0;
};

inline constexpr double kMinAcceptanceRate = 1e-6;

/// Uniform draws from [-1,1]^10 kept iff non-disturbing, labeled by the
/// n-cycle inequalities (0 non-contextual, 1 contextual).
LabeledDataset sample_behaviour_dataset(std::size_t n_samples, std::uint64_t seed);

/// Class-stratified variant: exactly round(n * contextual_fraction) contextual
/// rows, the rest non-contextual, each drawn uniformly from its class region
/// by the same rejection stream. Rows keep acceptance order.
LabeledDataset sample_behaviour_dataset(std::size_t n_samples, std::uint64_t seed,
                                        double contextual_fraction);

/// Points from [-1,1]^2; label 0 iff |x| + |y| <= 1.
LabeledDataset sample_rhombus_dataset(std::size_t n_samples, const std::optional<BiasSpec>& bias,
                                      std::uint64_t seed);

int rhombus_label(double x, double y);

/// Shuffled partition into floor(N f) and N - floor(N f) rows.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                std::uint64_t seed);

void write_dataset(const LabeledDataset& ds, std::ostream& out);
void write_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset read_dataset(std::istream& in, const std::string& source = "<stream>");
LabeledDataset read_dataset(const std::filesystem::path& path);

/// Lower-left quadrant with density 1/50, the undersampled corner of the
/// illustrative task.
BiasSpec lower_left_bias(double density_ratio = 1.0 / 50.0);

}  // namespace ctxbnn::dataset
