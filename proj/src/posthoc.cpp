#include "calibkit/posthoc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "calibkit/error.hpp"
#include "calibkit/kernels.hpp"
#include "json.hpp"

namespace calibkit {

using nlohmann::json;

namespace {

void check_holdout(const Matrix& scores, std::span<const int> labels) {
  require(scores.rows() > 0, "hold-out set is empty");
  require(scores.cols() >= 2, "hold-out set needs at least two classes");
  require(scores.rows() == labels.size(), "hold-out label count does not match rows");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < scores.cols(), "hold-out label out of range");
}

}  // namespace

std::vector<double> temperature_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 100; ++k) grid.push_back(static_cast<double>(k) / 10.0);
  return grid;
}

double temperature_nll(const Matrix& logits, std::span<const int> labels, double t) {
  check_holdout(logits, labels);
  require(t > 0.0, "temperature must be positive");
  return kernels::detail::temperature_nll_at(logits, labels, t);
}

TemperatureModel fit_temperature(const Matrix& holdout_logits, std::span<const int> labels) {
  check_holdout(holdout_logits, labels);
  kernels::detail::check_finite(holdout_logits, "hold-out logits");
  const auto grid = temperature_grid();
  const auto nll = kernels::omp::temperature_nll(holdout_logits, labels, grid);
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (nll[g] < nll[best]) best = g;
  return {grid[best]};
}

Matrix apply_temperature(const TemperatureModel& model, const Matrix& logits) {
  require(model.t > 0.0 && std::isfinite(model.t), "temperature must be positive");
  Matrix scaled = logits;
  for (double& v : scaled.data()) v /= model.t;
  return softmax_rows(scaled);
}

DirichletModel DirichletModel::identity(std::size_t k) {
  return {Matrix::identity(k), std::vector<double>(k, 0.0)};
}

Matrix clamped_log(const Matrix& probs) {
  Matrix out = probs;
  for (double& v : out.data()) v = std::log(std::max(v, kProbClamp));
  return out;
}

namespace {

Matrix dirichlet_logits(const DirichletModel& model, const Matrix& log_probs) {
  Matrix z = matmul(log_probs, model.w.transposed());
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) += model.b[c];
  return z;
}

double mean_nll(const Matrix& probs, std::span<const int> labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r)
    total -= std::log(std::max(probs(r, static_cast<std::size_t>(labels[r])), 1e-300));
  return total / static_cast<double>(probs.rows());
}

double bias_penalty(const std::vector<double>& b) {
  double total = 0.0;
  for (double v : b) total += v * v;
  return total / static_cast<double>(b.size());
}

struct DirichletGrad {
  Matrix w;
  std::vector<double> b;
};

DirichletGrad dirichlet_gradient(const DirichletModel& model, const Matrix& log_probs,
                                 std::span<const int> labels, double lambda, double mu) {
  const std::size_t n = log_probs.rows();
  const std::size_t k = log_probs.cols();
  Matrix residual = softmax_rows(dirichlet_logits(model, log_probs));
  for (std::size_t r = 0; r < n; ++r) {
    residual(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    for (double& v : residual.row(r)) v /= static_cast<double>(n);
  }
  DirichletGrad grad{matmul(residual.transposed(), log_probs), std::vector<double>(k, 0.0)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) grad.b[c] += residual(r, c);
  const double odir_scale = 2.0 * lambda / static_cast<double>(k * (k - 1));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j) grad.w(i, j) += odir_scale * model.w(i, j);
  for (std::size_t c = 0; c < k; ++c) grad.b[c] += 2.0 * mu * model.b[c] / static_cast<double>(k);
  return grad;
}

}  // namespace

Matrix apply_dirichlet(const DirichletModel& model, const Matrix& probs) {
  require(model.w.rows() == probs.cols() && model.w.cols() == probs.cols() &&
              model.b.size() == probs.cols(),
          "Dirichlet model size does not match the number of classes");
  return softmax_rows(dirichlet_logits(model, clamped_log(probs)));
}

double odir_penalty(const Matrix& w) {
  const std::size_t k = w.rows();
  require(k >= 2 && w.cols() == k, "ODIR needs a square matrix with K >= 2");
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j) total += w(i, j) * w(i, j);
  return total / static_cast<double>(k * (k - 1));
}

double dirichlet_nll(const DirichletModel& model, const Matrix& log_probs,
                     std::span<const int> labels) {
  return mean_nll(softmax_rows(dirichlet_logits(model, log_probs)), labels);
}

double dirichlet_objective(const DirichletModel& model, const Matrix& log_probs,
                           std::span<const int> labels, double lambda, double mu) {
  return dirichlet_nll(model, log_probs, labels) + lambda * odir_penalty(model.w) +
         mu * bias_penalty(model.b);
}

DirichletFit fit_dirichlet_single(const Matrix& holdout_probs, std::span<const int> labels,
                                  double lambda, double mu, double lr, std::size_t epochs) {
  check_holdout(holdout_probs, labels);
  require(lambda >= 0.0 && mu >= 0.0, "ODIR penalties must be nonnegative");
  require(lr > 0.0, "Dirichlet learning rate must be positive");
  const Matrix log_probs = clamped_log(holdout_probs);
  DirichletFit fit{DirichletModel::identity(holdout_probs.cols()), {}};
  double current = dirichlet_objective(fit.model, log_probs, labels, lambda, mu);
  fit.objective_history.push_back(current);
  DirichletGrad grad = dirichlet_gradient(fit.model, log_probs, labels, lambda, mu);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    DirichletModel candidate = fit.model;
    for (std::size_t i = 0; i < candidate.w.size(); ++i)
      candidate.w.data()[i] -= lr * grad.w.data()[i];
    for (std::size_t c = 0; c < candidate.b.size(); ++c) candidate.b[c] -= lr * grad.b[c];
    const double next = dirichlet_objective(candidate, log_probs, labels, lambda, mu);
    if (next <= current) {
      fit.model = std::move(candidate);
      current = next;
      grad = dirichlet_gradient(fit.model, log_probs, labels, lambda, mu);
    } else {
      lr *= 0.5;
    }
    fit.objective_history.push_back(current);
  }
  return fit;
}

DirichletModel fit_dirichlet(const Matrix& holdout_probs, std::span<const int> labels,
                             const OdirConfig& cfg) {
  check_holdout(holdout_probs, labels);
  require(!cfg.lambdas.empty() && !cfg.mus.empty(), "ODIR grids must be nonempty");
  const Matrix log_probs = clamped_log(holdout_probs);
  const std::size_t cells = cfg.lambdas.size() * cfg.mus.size();
  std::vector<DirichletModel> models(cells);
  std::vector<double> nll(cells);
  const auto total = static_cast<std::int64_t>(cells);
  // Grid points are independent; the argmin below runs in grid order.
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < total; ++c) {
    const auto cell = static_cast<std::size_t>(c);
    const double lambda = cfg.lambdas[cell / cfg.mus.size()];
    const double mu = cfg.mus[cell % cfg.mus.size()];
    models[cell] = fit_dirichlet_single(holdout_probs, labels, lambda, mu, cfg.lr, cfg.epochs).model;
    nll[cell] = dirichlet_nll(models[cell], log_probs, labels);
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < cells; ++c)
    if (nll[c] < nll[best]) best = c;
  return models[best];
}

std::string calibrator_to_json(const Calibrator& calibrator) {
  json doc;
  if (const auto* ts = std::get_if<TemperatureModel>(&calibrator)) {
    doc["kind"] = "temperature";
    doc["t"] = ts->t;
  } else {
    const auto& dc = std::get<DirichletModel>(calibrator);
    doc["kind"] = "dirichlet";
    json rows = json::array();
    for (std::size_t r = 0; r < dc.w.rows(); ++r)
      rows.push_back(std::vector<double>(dc.w.row(r).begin(), dc.w.row(r).end()));
    doc["w"] = std::move(rows);
    doc["b"] = dc.b;
  }
  return doc.dump() + "\n";
}

Calibrator calibrator_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "temperature") {
      TemperatureModel ts{doc.at("t").get<double>()};
      require(ts.t > 0.0, "calibrator JSON: temperature must be positive");
      return ts;
    }
    require(kind == "dirichlet", "calibrator JSON: unknown kind '" + kind + "'");
    const auto rows = doc.at("w").get<std::vector<std::vector<double>>>();
    auto b = doc.at("b").get<std::vector<double>>();
    const std::size_t k = b.size();
    require(k >= 2 && rows.size() == k, "calibrator JSON: w must be K x K with K = len(b)");
    Matrix w(k, k);
    for (std::size_t r = 0; r < k; ++r) {
      require(rows[r].size() == k, "calibrator JSON: w must be square");
      std::copy(rows[r].begin(), rows[r].end(), w.row(r).begin());
    }
    return DirichletModel{std::move(w), std::move(b)};
  } catch (const json::exception& e) {
    throw ValidationError(std::string("calibrator JSON: ") + e.what());
  }
}

}  // namespace calibkit
