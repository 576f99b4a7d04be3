#include <algorithm>
#include <cmath>
#include <string>

#include "calibkit/error.hpp"
#include "calibkit/kernels.hpp"

namespace calibkit::kernels {

int bin_index(double confidence, int m) {
  require(m >= 1, "bin count must be at least 1");
  require(confidence >= 0.0 && confidence <= 1.0,
          "confidence " + std::to_string(confidence) + " outside [0, 1]");
  if (confidence == 0.0) return 1;
  int i = static_cast<int>(std::ceil(confidence * m));
  i = std::clamp(i, 1, m);
  // ceil(c * m) can be off by one when c * m rounds across an integer.
  while (i > 1 && confidence <= static_cast<double>(i - 1) / m) --i;
  while (i < m && confidence > static_cast<double>(i) / m) ++i;
  return i;
}

double canonical_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

std::vector<BinSummary> summarize_bins(std::span<const double> confidences,
                                       std::span<const std::uint8_t> hits, int m) {
  require(confidences.size() == hits.size(), "confidence/hit length mismatch");
  std::vector<std::vector<double>> members(static_cast<std::size_t>(m));
  std::vector<BinSummary> bins(static_cast<std::size_t>(m));
  for (std::size_t s = 0; s < confidences.size(); ++s) {
    const auto b = static_cast<std::size_t>(bin_index(confidences[s], m) - 1);
    members[b].push_back(confidences[s]);
    bins[b].count += 1;
    bins[b].hits += hits[s] ? 1 : 0;
  }
  for (std::size_t b = 0; b < bins.size(); ++b)
    bins[b].confidence_sum = canonical_sum(std::move(members[b]));
  return bins;
}

double weighted_bin_error(std::span<const BinSummary> bins, std::size_t n) {
  double total = 0.0;
  for (const auto& bin : bins) {
    if (bin.count == 0) continue;
    const double count = static_cast<double>(bin.count);
    const double acc = static_cast<double>(bin.hits) / count;
    const double conf = bin.confidence_sum / count;
    total += (count / static_cast<double>(n)) * std::abs(acc - conf);
  }
  return total;
}

double max_bin_error(std::span<const BinSummary> bins) {
  double worst = 0.0;
  for (const auto& bin : bins) {
    if (bin.count == 0) continue;
    const double count = static_cast<double>(bin.count);
    worst = std::max(worst, std::abs(static_cast<double>(bin.hits) / count -
                                     bin.confidence_sum / count));
  }
  return worst;
}

namespace detail {

void check_matmul_shapes(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul shape mismatch: " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " * " +
                                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

void check_finite(const Matrix& m, const char* what) {
  require(m.all_finite(), std::string(what) + " contains non-finite values");
}

void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t r) {
  auto dst = out.row(r);
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double lhs = a(r, k);
    auto rhs = b.row(k);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += lhs * rhs[c];
  }
}

void softmax_row(std::span<const double> in, std::span<double> out) {
  const double top = *std::max_element(in.begin(), in.end());
  double total = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp(in[j] - top);
    total += out[j];
  }
  for (double& v : out) v /= total;
}

double class_error(const Matrix& probs, std::span<const int> labels, std::size_t j, int m) {
  const std::size_t n = probs.rows();
  std::vector<double> conf(n);
  std::vector<std::uint8_t> hit(n);
  for (std::size_t s = 0; s < n; ++s) {
    conf[s] = probs(s, j);
    hit[s] = static_cast<std::size_t>(labels[s]) == j ? 1 : 0;
  }
  const auto bins = summarize_bins(conf, hit, m);
  return weighted_bin_error(bins, n);
}

double temperature_nll_at(const Matrix& logits, std::span<const int> labels, double t) {
  const std::size_t k = logits.cols();
  std::vector<double> scaled(k);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    for (std::size_t j = 0; j < k; ++j) scaled[j] = z[j] / t;
    const double top = *std::max_element(scaled.begin(), scaled.end());
    double partition = 0.0;
    for (double v : scaled) partition += std::exp(v - top);
    total += std::log(partition) - (scaled[static_cast<std::size_t>(labels[r])] - top);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace detail

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  detail::check_matmul_shapes(a, b);
  Matrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) detail::matmul_row(a, b, out, r);
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  detail::check_finite(logits, "softmax input");
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) detail::softmax_row(logits.row(r), out.row(r));
  return out;
}

std::vector<double> classwise_errors(const Matrix& probs, std::span<const int> labels, int m) {
  std::vector<double> out(probs.cols());
  for (std::size_t j = 0; j < probs.cols(); ++j) out[j] = detail::class_error(probs, labels, j, m);
  return out;
}

std::vector<double> temperature_nll(const Matrix& logits, std::span<const int> labels,
                                    std::span<const double> temperatures) {
  std::vector<double> out(temperatures.size());
  for (std::size_t g = 0; g < temperatures.size(); ++g)
    out[g] = detail::temperature_nll_at(logits, labels, temperatures[g]);
  return out;
}

}  // namespace serial

}  // namespace calibkit::kernels
