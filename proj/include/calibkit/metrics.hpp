#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "calibkit/numerics.hpp"

namespace calibkit {

/// N probability vectors over K classes plus the true label of each.
/// Construction validates: N >= 1, K >= 2, entries in [0, 1], rows summing
/// to 1 within 1e-9, labels in [0, K).
class PredictionLog {
 public:
  PredictionLog(Matrix probs, std::vector<int> labels);

  const Matrix& probs() const { return probs_; }
  std::span<const int> labels() const { return labels_; }
  std::size_t size() const { return probs_.rows(); }
  std::size_t num_classes() const { return probs_.cols(); }

 private:
  Matrix probs_;
  std::vector<int> labels_;
};

inline constexpr double kRowSumTolerance = 1e-9;

struct BinningConfig {
  int m = 15;
};

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;         // A_i, 0 for an empty bin
  double mean_confidence = 0.0;  // C_i, 0 for an empty bin
};

struct ReliabilityTable {
  std::vector<ReliabilityBin> bins;
  double accuracy = 0.0;
  double mean_confidence = 0.0;
  std::size_t n = 0;
};

struct CalibrationReport {
  double ece = 0.0;
  double sce = 0.0;
  double mce = 0.0;
  std::vector<double> class_ece;
  double accuracy = 0.0;
  double mean_confidence = 0.0;
  int m = 15;
  std::size_t n = 0;
  std::size_t k = 0;
};

/// Lowest index among ties.
std::size_t argmax_prediction(std::span<const double> row);

/// Bin id in [1, m] for the interval ((i-1)/m, i/m]; confidence 0 maps to 1.
int bin_index(double confidence, int m);

double compute_ece(const PredictionLog& log, BinningConfig cfg = {});
double compute_mce(const PredictionLog& log, BinningConfig cfg = {});
double compute_sce(const PredictionLog& log, BinningConfig cfg = {});
double compute_class_j_ece(const PredictionLog& log, BinningConfig cfg, std::size_t j);
/// class-j-ECE for every class, computed class-parallel.
std::vector<double> compute_class_eces(const PredictionLog& log, BinningConfig cfg = {});

double accuracy(const PredictionLog& log);
double mean_confidence(const PredictionLog& log);

/// Per-bin (B_i, A_i, C_i) over top-label confidences. With
/// `misclassified_only` only samples with a wrong argmax are binned; the
/// selection may then be empty, in which case every bin is empty and the
/// global lines are 0.
ReliabilityTable reliability_table(const PredictionLog& log, BinningConfig cfg = {},
                                   bool misclassified_only = false);

std::vector<std::size_t> confidence_histogram(const PredictionLog& log, BinningConfig cfg,
                                              bool misclassified_only);

CalibrationReport calibration_report(const PredictionLog& log, BinningConfig cfg = {});

}  // namespace calibkit
