#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "calibkit/numerics.hpp"

namespace calibkit {

struct TemperatureModel {
  double t = 1.0;
};

/// softmax(W log p + b), W is K x K.
struct DirichletModel {
  Matrix w;
  std::vector<double> b;

  static DirichletModel identity(std::size_t k);
};

struct OdirConfig {
  std::vector<double> lambdas{0, 0.01, 0.1, 1, 10, 0.005, 0.05, 0.5, 5, 0.0025, 0.025, 0.25, 2.5};
  std::vector<double> mus{0, 0.01, 0.1, 1, 10};
  double lr = 0.01;
  std::size_t epochs = 500;
};

/// {0.1, 0.2, ..., 10.0}, computed as k / 10.
std::vector<double> temperature_grid();

/// Mean NLL of softmax(logits / t) against labels.
double temperature_nll(const Matrix& logits, std::span<const int> labels, double t);

/// Grid argmin of hold-out NLL over temperature_grid(); ties go to the
/// smallest t.
TemperatureModel fit_temperature(const Matrix& holdout_logits, std::span<const int> labels);

Matrix apply_temperature(const TemperatureModel& model, const Matrix& logits);

inline constexpr double kProbClamp = 1e-12;

/// log(max(p, 1e-12)) elementwise.
Matrix clamped_log(const Matrix& probs);

Matrix apply_dirichlet(const DirichletModel& model, const Matrix& probs);

/// (1 / (K (K-1))) sum_{i != j} w_ij^2.
double odir_penalty(const Matrix& w);

/// NLL(softmax(W log p + b)) + lambda * ODIR(W) + mu * (1/K) sum b_j^2.
double dirichlet_objective(const DirichletModel& model, const Matrix& log_probs,
                           std::span<const int> labels, double lambda, double mu);

/// Mean NLL of the calibrated probabilities.
double dirichlet_nll(const DirichletModel& model, const Matrix& log_probs,
                     std::span<const int> labels);

struct DirichletFit {
  DirichletModel model;
  std::vector<double> objective_history;  // accepted objective per epoch, starts at init
};

/// Full-batch gradient descent from W = I, b = 0. A step that raises the
/// objective is rejected and the learning rate halved, so the history is
/// non-increasing.
DirichletFit fit_dirichlet_single(const Matrix& holdout_probs, std::span<const int> labels,
                                  double lambda, double mu, double lr, std::size_t epochs);

/// Fits every (lambda, mu) grid pair and keeps the model with the lowest
/// hold-out NLL (first in grid order on ties).
DirichletModel fit_dirichlet(const Matrix& holdout_probs, std::span<const int> labels,
                             const OdirConfig& cfg = {});

using Calibrator = std::variant<TemperatureModel, DirichletModel>;

std::string calibrator_to_json(const Calibrator& calibrator);
Calibrator calibrator_from_json(const std::string& text);

}  // namespace calibkit
