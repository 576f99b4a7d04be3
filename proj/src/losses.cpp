#include "calibkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "calibkit/error.hpp"
#include "calibkit/metrics.hpp"

namespace calibkit {

void Batch::validate() const {
  require(logits.rows() >= 1, "batch needs at least one sample");
  require(logits.cols() >= 2, "batch needs at least two classes");
  require(labels.size() == logits.rows(), "batch label count does not match logit rows");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < logits.cols(),
            "batch label " + std::to_string(y) + " out of range");
}

void LossSpec::validate() const {
  require(alpha >= 0.0 && alpha < 1.0, "label smoothing alpha must lie in [0, 1)");
  require(gamma >= 0.0, "focal gamma must be nonnegative");
  require(beta >= 0.0, "beta must be nonnegative");
}

ClassificationLoss parse_classification_loss(std::string_view name) {
  if (name == "nll") return ClassificationLoss::nll;
  if (name == "ls") return ClassificationLoss::label_smoothing;
  if (name == "fl") return ClassificationLoss::focal;
  if (name == "brier") return ClassificationLoss::brier;
  throw ValidationError("unknown classification loss '" + std::string(name) + "'");
}

AuxiliaryLoss parse_auxiliary_loss(std::string_view name) {
  if (name == "none") return AuxiliaryLoss::none;
  if (name == "mdca") return AuxiliaryLoss::mdca;
  if (name == "dca") return AuxiliaryLoss::dca;
  throw ValidationError("unknown auxiliary loss '" + std::string(name) + "'");
}

std::string to_string(ClassificationLoss loss) {
  switch (loss) {
    case ClassificationLoss::nll: return "nll";
    case ClassificationLoss::label_smoothing: return "ls";
    case ClassificationLoss::focal: return "fl";
    case ClassificationLoss::brier: return "brier";
  }
  return "?";
}

std::string to_string(AuxiliaryLoss loss) {
  switch (loss) {
    case AuxiliaryLoss::none: return "none";
    case AuxiliaryLoss::mdca: return "mdca";
    case AuxiliaryLoss::dca: return "dca";
  }
  return "?";
}

Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto p = probs.row(r);
    auto g = grad_probs.row(r);
    double dot = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) dot += g[j] * p[j];
    auto dst = out.row(r);
    for (std::size_t k = 0; k < p.size(); ++k) dst[k] = p[k] * (g[k] - dot);
  }
  return out;
}

namespace {

double safe_log(double p) { return std::log(std::max(p, kLogClamp)); }

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Cross entropy against per-row target distributions; gradient (p - q) / N.
LossOutput soft_target_cross_entropy(const Matrix& probs, const Matrix& targets) {
  const double n = static_cast<double>(probs.rows());
  LossOutput out{0.0, Matrix(probs.rows(), probs.cols())};
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      const double q = targets(r, j);
      if (q != 0.0) total -= q * safe_log(probs(r, j));
      out.grad_logits(r, j) = (probs(r, j) - q) / n;
    }
  }
  out.value = total / n;
  return out;
}

Matrix one_hot(const Batch& batch) {
  Matrix q(batch.logits.rows(), batch.logits.cols());
  for (std::size_t r = 0; r < q.rows(); ++r) q(r, static_cast<std::size_t>(batch.labels[r])) = 1.0;
  return q;
}

}  // namespace

LossOutput nll_loss(const Batch& batch) {
  batch.validate();
  const Matrix probs = softmax_rows(batch.logits);
  const double n = static_cast<double>(probs.rows());
  LossOutput out{0.0, Matrix(probs.rows(), probs.cols())};
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto y = static_cast<std::size_t>(batch.labels[r]);
    total -= safe_log(probs(r, y));
    for (std::size_t j = 0; j < probs.cols(); ++j)
      out.grad_logits(r, j) = (probs(r, j) - (j == y ? 1.0 : 0.0)) / n;
  }
  out.value = total / n;
  return out;
}

LossOutput label_smoothing_loss(const Batch& batch, double alpha) {
  batch.validate();
  require(alpha >= 0.0 && alpha < 1.0, "label smoothing alpha must lie in [0, 1)");
  const std::size_t k = batch.logits.cols();
  Matrix targets(batch.logits.rows(), k, alpha / static_cast<double>(k - 1));
  for (std::size_t r = 0; r < targets.rows(); ++r)
    targets(r, static_cast<std::size_t>(batch.labels[r])) = 1.0 - alpha;
  return soft_target_cross_entropy(softmax_rows(batch.logits), targets);
}

LossOutput focal_loss(const Batch& batch, double gamma) {
  batch.validate();
  require(gamma >= 0.0, "focal gamma must be nonnegative");
  const Matrix probs = softmax_rows(batch.logits);
  const double n = static_cast<double>(probs.rows());
  LossOutput out{0.0, Matrix(probs.rows(), probs.cols())};
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto y = static_cast<std::size_t>(batch.labels[r]);
    const double p = probs(r, y);
    const double log_p = safe_log(p);
    const double miss = 1.0 - p;
    const double weight = std::pow(miss, gamma);
    total += weight * -log_p;
    // p * d/dp [-(1-p)^g log p] = g (1-p)^(g-1) p log p - (1-p)^g
    double modulating = 0.0;
    if (gamma != 0.0 && miss > 0.0) modulating = gamma * std::pow(miss, gamma - 1.0) * p * log_p;
    const double scale = modulating - weight;
    for (std::size_t k = 0; k < probs.cols(); ++k)
      out.grad_logits(r, k) = scale * ((k == y ? 1.0 : 0.0) - probs(r, k)) / n;
  }
  out.value = total / n;
  return out;
}

LossOutput brier_loss(const Batch& batch) {
  batch.validate();
  const Matrix probs = softmax_rows(batch.logits);
  const Matrix q = one_hot(batch);
  const double n = static_cast<double>(probs.rows());
  Matrix grad_probs(probs.rows(), probs.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      const double diff = probs(r, j) - q(r, j);
      total += diff * diff;
      grad_probs(r, j) = 2.0 * diff / n;
    }
  }
  return {total / n, softmax_backward(probs, grad_probs)};
}

LossOutput mdca_loss(const Batch& batch) {
  batch.validate();
  const Matrix probs = softmax_rows(batch.logits);
  const std::size_t n = probs.rows();
  const std::size_t k = probs.cols();
  std::vector<double> confidence(k, 0.0);
  std::vector<double> frequency(k, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < k; ++j) confidence[j] += probs(r, j);
    frequency[static_cast<std::size_t>(batch.labels[r])] += 1.0;
  }
  double total = 0.0;
  std::vector<double> direction(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double gap = confidence[j] / static_cast<double>(n) - frequency[j] / static_cast<double>(n);
    total += std::abs(gap);
    direction[j] = sign(gap) / (static_cast<double>(k) * static_cast<double>(n));
  }
  Matrix grad_probs(n, k);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < k; ++j) grad_probs(r, j) = direction[j];
  return {total / static_cast<double>(k), softmax_backward(probs, grad_probs)};
}

LossOutput dca_loss(const Batch& batch) {
  batch.validate();
  const Matrix probs = softmax_rows(batch.logits);
  const std::size_t n = probs.rows();
  std::vector<std::size_t> predicted(n);
  double confidence = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) {
    predicted[r] = argmax_prediction(probs.row(r));
    confidence += probs(r, predicted[r]);
    hits += static_cast<int>(predicted[r]) == batch.labels[r] ? 1 : 0;
  }
  const double gap = confidence / static_cast<double>(n) -
                     static_cast<double>(hits) / static_cast<double>(n);
  Matrix grad_probs(n, probs.cols());
  for (std::size_t r = 0; r < n; ++r) grad_probs(r, predicted[r]) = sign(gap) / static_cast<double>(n);
  return {std::abs(gap), softmax_backward(probs, grad_probs)};
}

LossOutput combined_loss(const Batch& batch, const LossSpec& spec) {
  spec.validate();
  LossOutput base;
  switch (spec.classification) {
    case ClassificationLoss::nll: base = nll_loss(batch); break;
    case ClassificationLoss::label_smoothing: base = label_smoothing_loss(batch, spec.alpha); break;
    case ClassificationLoss::focal: base = focal_loss(batch, spec.gamma); break;
    case ClassificationLoss::brier: base = brier_loss(batch); break;
  }
  if (spec.auxiliary == AuxiliaryLoss::none || spec.beta == 0.0) return base;
  const LossOutput aux = spec.auxiliary == AuxiliaryLoss::mdca ? mdca_loss(batch) : dca_loss(batch);
  base.value += spec.beta * aux.value;
  auto dst = base.grad_logits.data();
  auto src = aux.grad_logits.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += spec.beta * src[i];
  return base;
}

}  // namespace calibkit
