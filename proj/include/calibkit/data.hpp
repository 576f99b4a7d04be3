#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "calibkit/metrics.hpp"
#include "calibkit/numerics.hpp"

namespace calibkit {

struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  std::size_t k = 0;

  std::size_t size() const { return features.rows(); }
  std::size_t dims() const { return features.cols(); }
  void validate() const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

struct BlobParams {
  std::size_t k = 3;
  std::size_t n = 3000;
  std::size_t d = 2;
  double separation = 6.0;
};

/// k unit-variance Gaussian clusters. Means sit evenly on a circle in a
/// seeded random 2-plane, neighbouring means `separation` apart. Counts are
/// balanced with the remainder going to the lowest class ids; rows are
/// shuffled.
LabeledDataset gen_blobs(const BlobParams& params, std::uint64_t seed);

/// n_j = round_half_up(n_max * IF^(-j / (K-1))).
std::vector<std::size_t> longtail_counts(std::size_t k, std::size_t n_max, double imbalance_factor);

/// Blobs with the exponential long-tail class profile; params.n is n_max.
LabeledDataset gen_longtail(const BlobParams& params, double imbalance_factor, std::uint64_t seed);

/// Counter-clockwise rotation of the first two feature dims by theta degrees.
LabeledDataset rotate_features(const LabeledDataset& ds, double theta_degrees);

/// Seeded split into (first, second) with round(n * second_fraction) rows
/// in the second part.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                        double second_fraction,
                                                        std::uint64_t seed);

/// Header `f0,...,f{D-1},label`, 17 significant digits. The loader also
/// accepts headerless files.
void save_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset_csv(const std::filesystem::path& path);

/// One {"probs":[...],"label":n} object per line; `logits`, when given, are
/// written alongside.
void save_prediction_log_jsonl(const PredictionLog& log, const std::filesystem::path& path,
                               const Matrix* logits = nullptr);

struct LoadedLog {
  PredictionLog log;
  std::optional<Matrix> logits;  // present when every line carried logits
};

/// Lines may carry "probs", "logits" or both; logits-only lines are
/// softmaxed. Rows off by more than 1e-9 but at most 1e-6 are renormalized.
LoadedLog load_prediction_log_jsonl(const std::filesystem::path& path);

inline constexpr double kRenormalizeTolerance = 1e-6;

}  // namespace calibkit
