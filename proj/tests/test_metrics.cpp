#include <gtest/gtest.h>

#include <numeric>

#include "calibkit/error.hpp"
#include "calibkit/metrics.hpp"
#include "oracles.hpp"

namespace calibkit {
namespace {

PredictionLog one_hot_correct(std::size_t n, std::size_t k) {
  Matrix p(n, k);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = static_cast<int>(r % k);
    p(r, r % k) = 1.0;
  }
  return PredictionLog(std::move(p), std::move(y));
}

PredictionLog single_sample(double p0) { return PredictionLog(Matrix{{p0, 1.0 - p0}}, {0}); }

// (conf 0.8, correct) and (conf 0.6, incorrect).
PredictionLog two_sample() { return PredictionLog(Matrix{{0.8, 0.2}, {0.6, 0.4}}, {0, 1}); }

TEST(PredictionLogType, Validates) {
  EXPECT_THROW(PredictionLog(Matrix{{0.5, 0.4}}, {0}), ValidationError);
  EXPECT_THROW(PredictionLog(Matrix{{0.5, 0.5}}, {2}), ValidationError);
  EXPECT_THROW(PredictionLog(Matrix{{1.0}}, {0}), ValidationError);
  EXPECT_THROW(PredictionLog(Matrix(0, 2), {}), ValidationError);
  EXPECT_THROW(PredictionLog(Matrix{{1.5, -0.5}}, {0}), ValidationError);
  EXPECT_NO_THROW(PredictionLog(Matrix{{0.5, 0.5 + 1e-10}}, {1}));
}

TEST(BinIndex, Examples) {
  EXPECT_EQ(bin_index(1.0, 15), 15);
  EXPECT_EQ(bin_index(0.8, 15), 12);
  EXPECT_EQ(bin_index(0.0, 15), 1);
  EXPECT_EQ(bin_index(0.6, 15), 9);
  EXPECT_THROW(bin_index(1.0000001, 15), ValidationError);
  EXPECT_THROW(bin_index(-0.1, 15), ValidationError);
}

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax_prediction(std::vector<double>{0.2, 0.5, 0.3}), 1u);
  EXPECT_EQ(argmax_prediction(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_EQ(argmax_prediction(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}), 0u);
}

TEST(Ece, Examples) {
  EXPECT_EQ(compute_ece(one_hot_correct(20, 4)), 0.0);
  EXPECT_NEAR(compute_ece(single_sample(0.8)), 0.2, 1e-12);
  EXPECT_NEAR(compute_ece(two_sample()), 0.4, 1e-12);
}

TEST(Mce, Examples) {
  EXPECT_EQ(compute_mce(one_hot_correct(20, 4)), 0.0);
  EXPECT_NEAR(compute_mce(two_sample()), 0.6, 1e-12);
  EXPECT_EQ(compute_mce(single_sample(0.8)), compute_ece(single_sample(0.8)));
}

TEST(Sce, Examples) {
  EXPECT_EQ(compute_sce(one_hot_correct(20, 4)), 0.0);
  const auto log = single_sample(0.7);
  EXPECT_NEAR(compute_sce(log), 0.3, 1e-12);
  EXPECT_NEAR(compute_class_j_ece(log, {}, 0), 0.3, 1e-12);
  EXPECT_NEAR(compute_class_j_ece(log, {}, 1), 0.3, 1e-12);
  EXPECT_THROW(compute_class_j_ece(log, {}, 2), ValidationError);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(compute_class_j_ece(one_hot_correct(20, 4), {}, j), 0.0);
}

TEST(Reliability, Examples) {
  const auto perfect = reliability_table(one_hot_correct(12, 3));
  for (std::size_t b = 0; b + 1 < perfect.bins.size(); ++b) EXPECT_EQ(perfect.bins[b].count, 0u);
  EXPECT_EQ(perfect.bins.back().count, 12u);
  EXPECT_EQ(perfect.bins.back().accuracy, 1.0);
  EXPECT_EQ(perfect.bins.back().mean_confidence, 1.0);

  const auto two = reliability_table(two_sample());
  for (std::size_t b = 0; b < two.bins.size(); ++b) {
    if (b == 8) {
      EXPECT_EQ(two.bins[b].count, 1u);
      EXPECT_EQ(two.bins[b].accuracy, 0.0);
      EXPECT_EQ(two.bins[b].mean_confidence, 0.6);
    } else if (b == 11) {
      EXPECT_EQ(two.bins[b].count, 1u);
      EXPECT_EQ(two.bins[b].accuracy, 1.0);
      EXPECT_EQ(two.bins[b].mean_confidence, 0.8);
    } else {
      EXPECT_EQ(two.bins[b].count, 0u);
    }
  }
  EXPECT_EQ(two.accuracy, 0.5);
  EXPECT_NEAR(two.mean_confidence, 0.7, 1e-15);
  EXPECT_NEAR(two.bins[8].lower, 8.0 / 15, 1e-15);
  EXPECT_NEAR(two.bins[8].upper, 9.0 / 15, 1e-15);
}

TEST(Histogram, Examples) {
  const auto none = confidence_histogram(one_hot_correct(9, 3), {}, true);
  EXPECT_EQ(std::accumulate(none.begin(), none.end(), std::size_t{0}), 0u);

  const auto wrong = confidence_histogram(two_sample(), {}, true);
  for (std::size_t b = 0; b < wrong.size(); ++b) EXPECT_EQ(wrong[b], b == 8 ? 1u : 0u);

  Rng rng(8);
  const auto log = testing::random_log(rng, 300, 5);
  const auto table = reliability_table(log);
  const auto hist = confidence_histogram(log, {}, false);
  for (std::size_t b = 0; b < hist.size(); ++b) EXPECT_EQ(hist[b], table.bins[b].count);
}

TEST(Reliability, MisclassifiedOnlyOnPerfectLogIsEmpty) {
  const auto table = reliability_table(one_hot_correct(6, 2), {}, true);
  EXPECT_EQ(table.n, 0u);
  for (const auto& b : table.bins) EXPECT_EQ(b.count, 0u);
}

TEST(Report, AggregatesMetrics) {
  Rng rng(21);
  const auto log = testing::random_log(rng, 500, 6);
  const auto report = calibration_report(log, {10});
  EXPECT_EQ(report.ece, compute_ece(log, {10}));
  EXPECT_EQ(report.mce, compute_mce(log, {10}));
  EXPECT_EQ(report.sce, compute_sce(log, {10}));
  EXPECT_EQ(report.class_ece.size(), 6u);
  EXPECT_EQ(report.m, 10);
  EXPECT_EQ(report.n, 500u);
  EXPECT_EQ(report.k, 6u);
}

// ------------------------------------------------------------ properties

TEST(MetricProperties, OracleEquivalenceOnRandomLogs) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.next_below(1000);
    const std::size_t k = 2 + rng.next_below(9);
    const int m = std::array{10, 15, 20}[rng.next_below(3)];
    const auto log = testing::random_log(rng, n, k);
    ASSERT_EQ(compute_ece(log, {m}), testing::naive_ece(log, m));
    ASSERT_EQ(compute_mce(log, {m}), testing::naive_mce(log, m));
    ASSERT_EQ(compute_sce(log, {m}), testing::naive_sce(log, m));
    for (std::size_t j = 0; j < k; ++j)
      ASSERT_EQ(compute_class_j_ece(log, {m}, j), testing::naive_class_ece(log, m, j));
  }
}

TEST(MetricProperties, SamplePermutationInvariance) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto log = testing::random_log(rng, 2 + rng.next_below(400), 2 + rng.next_below(8));
    const auto perm = rng_shuffle(rng, log.size());
    std::vector<int> labels;
    for (auto i : perm) labels.push_back(log.labels()[i]);
    const PredictionLog shuffled(log.probs().gather_rows(perm), labels);
    const auto a = calibration_report(log);
    const auto b = calibration_report(shuffled);
    ASSERT_EQ(a.ece, b.ece);
    ASSERT_EQ(a.mce, b.mce);
    ASSERT_EQ(a.sce, b.sce);
    ASSERT_EQ(a.class_ece, b.class_ece);
    ASSERT_EQ(a.accuracy, b.accuracy);
    ASSERT_EQ(a.mean_confidence, b.mean_confidence);
  }
}

TEST(MetricProperties, ClassPermutationEquivariance) {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng.next_below(8);
    const auto log = testing::random_log(rng, 1 + rng.next_below(400), k);
    const auto perm = rng_shuffle(rng, k);  // old class perm[j] becomes new class j
    std::vector<std::size_t> inverse(k);
    for (std::size_t j = 0; j < k; ++j) inverse[perm[j]] = j;
    Matrix probs(log.size(), k);
    std::vector<int> labels(log.size());
    for (std::size_t r = 0; r < log.size(); ++r) {
      for (std::size_t j = 0; j < k; ++j) probs(r, j) = log.probs()(r, perm[j]);
      labels[r] = static_cast<int>(inverse[static_cast<std::size_t>(log.labels()[r])]);
    }
    const PredictionLog permuted(probs, labels);
    ASSERT_EQ(compute_ece(log), compute_ece(permuted));
    ASSERT_EQ(compute_mce(log), compute_mce(permuted));
    ASSERT_EQ(compute_sce(log), compute_sce(permuted));
  }
}

TEST(MetricProperties, BoundsAndSceIdentity) {
  Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const auto log = testing::random_log(rng, 1 + rng.next_below(300), 2 + rng.next_below(8));
    const int m = 1 + static_cast<int>(rng.next_below(30));
    const auto r = calibration_report(log, {m});
    ASSERT_GE(r.ece, 0.0);
    ASSERT_LE(r.ece, r.mce);
    ASSERT_LE(r.mce, 1.0);
    ASSERT_LE(r.sce, 1.0);
    const double mean = std::accumulate(r.class_ece.begin(), r.class_ece.end(), 0.0) /
                        static_cast<double>(r.class_ece.size());
    ASSERT_NEAR(r.sce, mean, 1e-12);
    std::size_t total = 0;
    for (const auto& b : reliability_table(log, {m}).bins) total += b.count;
    ASSERT_EQ(total, log.size());
  }
}

}  // namespace
}  // namespace calibkit
