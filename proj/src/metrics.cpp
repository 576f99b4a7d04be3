#include "calibkit/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "calibkit/error.hpp"
#include "calibkit/kernels.hpp"

namespace calibkit {

PredictionLog::PredictionLog(Matrix probs, std::vector<int> labels)
    : probs_(std::move(probs)), labels_(std::move(labels)) {
  require(probs_.rows() >= 1, "prediction log needs at least one sample");
  require(probs_.cols() >= 2, "prediction log needs at least two classes");
  require(labels_.size() == probs_.rows(), "label count does not match probability rows");
  const auto k = static_cast<int>(probs_.cols());
  for (std::size_t r = 0; r < probs_.rows(); ++r) {
    require(labels_[r] >= 0 && labels_[r] < k,
            "sample " + std::to_string(r) + ": label " + std::to_string(labels_[r]) +
                " outside [0, " + std::to_string(k) + ")");
    double total = 0.0;
    for (double p : probs_.row(r)) {
      require(std::isfinite(p) && p >= 0.0 && p <= 1.0,
              "sample " + std::to_string(r) + ": probability outside [0, 1]");
      total += p;
    }
    require(std::abs(total - 1.0) <= kRowSumTolerance,
            "sample " + std::to_string(r) + ": probabilities sum to " + std::to_string(total));
  }
}

std::size_t argmax_prediction(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

int bin_index(double confidence, int m) { return kernels::bin_index(confidence, m); }

namespace {

struct TopLabel {
  std::vector<double> confidence;
  std::vector<std::uint8_t> correct;
};

TopLabel top_label(const PredictionLog& log, bool misclassified_only = false) {
  TopLabel out;
  for (std::size_t r = 0; r < log.size(); ++r) {
    const auto row = log.probs().row(r);
    const auto pred = argmax_prediction(row);
    const bool hit = static_cast<int>(pred) == log.labels()[r];
    if (misclassified_only && hit) continue;
    out.confidence.push_back(row[pred]);
    out.correct.push_back(hit ? 1 : 0);
  }
  return out;
}

void check_bins(BinningConfig cfg) { require(cfg.m >= 1, "bin count must be at least 1"); }

}  // namespace

double compute_ece(const PredictionLog& log, BinningConfig cfg) {
  check_bins(cfg);
  const auto top = top_label(log);
  return kernels::weighted_bin_error(kernels::summarize_bins(top.confidence, top.correct, cfg.m),
                                     log.size());
}

double compute_mce(const PredictionLog& log, BinningConfig cfg) {
  check_bins(cfg);
  const auto top = top_label(log);
  return kernels::max_bin_error(kernels::summarize_bins(top.confidence, top.correct, cfg.m));
}

std::vector<double> compute_class_eces(const PredictionLog& log, BinningConfig cfg) {
  check_bins(cfg);
  return kernels::omp::classwise_errors(log.probs(), log.labels(), cfg.m);
}

double compute_class_j_ece(const PredictionLog& log, BinningConfig cfg, std::size_t j) {
  check_bins(cfg);
  require(j < log.num_classes(), "class " + std::to_string(j) + " out of range");
  return kernels::detail::class_error(log.probs(), log.labels(), j, cfg.m);
}

double compute_sce(const PredictionLog& log, BinningConfig cfg) {
  return kernels::canonical_sum(compute_class_eces(log, cfg)) /
         static_cast<double>(log.num_classes());
}

double accuracy(const PredictionLog& log) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < log.size(); ++r)
    hits += static_cast<int>(argmax_prediction(log.probs().row(r))) == log.labels()[r] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(log.size());
}

double mean_confidence(const PredictionLog& log) {
  return kernels::canonical_sum(top_label(log).confidence) / static_cast<double>(log.size());
}

ReliabilityTable reliability_table(const PredictionLog& log, BinningConfig cfg,
                                   bool misclassified_only) {
  check_bins(cfg);
  const auto top = top_label(log, misclassified_only);
  const auto bins = kernels::summarize_bins(top.confidence, top.correct, cfg.m);
  ReliabilityTable table;
  table.n = top.confidence.size();
  table.bins.reserve(bins.size());
  std::size_t hits = 0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    ReliabilityBin out;
    out.lower = static_cast<double>(b) / cfg.m;
    out.upper = static_cast<double>(b + 1) / cfg.m;
    out.count = bins[b].count;
    if (bins[b].count > 0) {
      const double count = static_cast<double>(bins[b].count);
      out.accuracy = static_cast<double>(bins[b].hits) / count;
      out.mean_confidence = bins[b].confidence_sum / count;
    }
    hits += bins[b].hits;
    table.bins.push_back(out);
  }
  if (table.n > 0) {
    table.accuracy = static_cast<double>(hits) / static_cast<double>(table.n);
    table.mean_confidence = kernels::canonical_sum(top.confidence) / static_cast<double>(table.n);
  }
  return table;
}

std::vector<std::size_t> confidence_histogram(const PredictionLog& log, BinningConfig cfg,
                                              bool misclassified_only) {
  check_bins(cfg);
  std::vector<std::size_t> counts(static_cast<std::size_t>(cfg.m), 0);
  for (double c : top_label(log, misclassified_only).confidence)
    counts[static_cast<std::size_t>(bin_index(c, cfg.m) - 1)] += 1;
  return counts;
}

CalibrationReport calibration_report(const PredictionLog& log, BinningConfig cfg) {
  check_bins(cfg);
  CalibrationReport report;
  const auto top = top_label(log);
  const auto bins = kernels::summarize_bins(top.confidence, top.correct, cfg.m);
  report.ece = kernels::weighted_bin_error(bins, log.size());
  report.mce = kernels::max_bin_error(bins);
  report.class_ece = compute_class_eces(log, cfg);
  report.sce = kernels::canonical_sum(report.class_ece) / static_cast<double>(log.num_classes());
  report.accuracy = accuracy(log);
  report.mean_confidence = mean_confidence(log);
  report.m = cfg.m;
  report.n = log.size();
  report.k = log.num_classes();
  return report;
}

}  // namespace calibkit
