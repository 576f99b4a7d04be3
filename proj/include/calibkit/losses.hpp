#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "calibkit/numerics.hpp"

namespace calibkit {

/// A minibatch of pre-softmax scores and their labels.
struct Batch {
  Matrix logits;
  std::vector<int> labels;

  /// Throws ValidationError on shape mismatch, empty batch or bad labels.
  void validate() const;
};

struct LossOutput {
  double value = 0.0;
  Matrix grad_logits;
};

enum class ClassificationLoss { nll, label_smoothing, focal, brier };
enum class AuxiliaryLoss { none, mdca, dca };

/// Which classification loss, its hyperparameter, and the optional
/// calibration regularizer weighted by beta.
struct LossSpec {
  ClassificationLoss classification = ClassificationLoss::nll;
  double alpha = 0.1;  // label smoothing
  double gamma = 1.0;  // focal
  AuxiliaryLoss auxiliary = AuxiliaryLoss::none;
  double beta = 0.0;

  void validate() const;
};

ClassificationLoss parse_classification_loss(std::string_view name);
AuxiliaryLoss parse_auxiliary_loss(std::string_view name);
std::string to_string(ClassificationLoss loss);
std::string to_string(AuxiliaryLoss loss);

inline constexpr double kLogClamp = 1e-300;

LossOutput nll_loss(const Batch& batch);
LossOutput label_smoothing_loss(const Batch& batch, double alpha);
LossOutput focal_loss(const Batch& batch, double gamma);
LossOutput brier_loss(const Batch& batch);

/// Multi-class difference of confidence and accuracy:
/// (1/K) sum_j | mean_i s_i[j] - mean_i q_i[j] | over the minibatch.
/// The label-frequency term is constant, so the gradient is
/// sign(d_j) / (K * N_b) pushed through the softmax Jacobian, sign(0) = 0.
LossOutput mdca_loss(const Batch& batch);

/// | mean top-label confidence - batch accuracy |. Accuracy is a step
/// function and carries no gradient.
LossOutput dca_loss(const Batch& batch);

/// classification + beta * auxiliary.
LossOutput combined_loss(const Batch& batch, const LossSpec& spec);

/// Pulls a per-probability gradient back through the row softmax:
/// dz_k = p_k (g_k - sum_j g_j p_j).
Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs);

}  // namespace calibkit
