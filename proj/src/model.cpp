#include "calibkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "calibkit/data.hpp"
#include "calibkit/error.hpp"
#include "calibkit/metrics.hpp"
#include "json.hpp"

namespace calibkit {

using nlohmann::json;

void MlpModel::validate() const {
  require(layer_dims.size() >= 2, "model needs an input and an output dimension");
  require(layers.size() == layer_dims.size() - 1, "layer count does not match layer_dims");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    require(layer_dims[l] > 0 && layer_dims[l + 1] > 0, "layer dimensions must be positive");
    require(layers[l].weights.rows() == layer_dims[l] &&
                layers[l].weights.cols() == layer_dims[l + 1],
            "layer " + std::to_string(l) + " weight shape disagrees with layer_dims");
    require(layers[l].bias.size() == layer_dims[l + 1],
            "layer " + std::to_string(l) + " bias length disagrees with layer_dims");
    require(layers[l].weights.all_finite(), "non-finite weights");
    for (double b : layers[l].bias) require(std::isfinite(b), "non-finite bias");
  }
}

MlpModel init_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng) {
  require(layer_dims.size() >= 2, "model needs an input and an output dimension");
  MlpModel model;
  model.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const std::size_t fan_out = layer_dims[l + 1];
    require(fan_in > 0 && fan_out > 0, "layer dimensions must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
    for (double& w : layer.weights.data()) w = (2.0 * rng.next_uniform() - 1.0) * limit;
    model.layers.push_back(std::move(layer));
  }
  return model;
}

namespace {

Matrix affine(const Matrix& input, const DenseLayer& layer) {
  Matrix out = matmul(input, layer.weights);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
  }
  return out;
}

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

void check_features(const MlpModel& model, const Matrix& features) {
  require(features.cols() == model.input_dim(),
          "feature dimension " + std::to_string(features.cols()) + " does not match model input " +
              std::to_string(model.input_dim()));
}

}  // namespace

ForwardTrace forward_with_trace(const MlpModel& model, const Matrix& features) {
  check_features(model, features);
  ForwardTrace trace;
  Matrix input = features;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Matrix pre = affine(input, model.layers[l]);
    Matrix next = l + 1 < model.layers.size() ? relu(pre) : Matrix();
    trace.inputs.push_back(std::move(input));
    trace.preacts.push_back(std::move(pre));
    input = std::move(next);
  }
  return trace;
}

Matrix forward(const MlpModel& model, const Matrix& features) {
  check_features(model, features);
  Matrix h = features;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    h = affine(h, model.layers[l]);
    if (l + 1 < model.layers.size()) h = relu(h);
  }
  return h;
}

std::vector<DenseLayer> backward(const MlpModel& model, const ForwardTrace& trace,
                                 const Matrix& grad_logits) {
  const Matrix& logits = trace.logits();
  require(grad_logits.rows() == logits.rows() && grad_logits.cols() == logits.cols(),
          "grad_logits shape does not match forward output");
  std::vector<DenseLayer> grads(model.layers.size());
  Matrix upstream = grad_logits;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    grads[l].weights = matmul(trace.inputs[l].transposed(), upstream);
    grads[l].bias.assign(upstream.cols(), 0.0);
    for (std::size_t r = 0; r < upstream.rows(); ++r) {
      auto row = upstream.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) grads[l].bias[c] += row[c];
    }
    if (l == 0) break;
    Matrix down = matmul(upstream, model.layers[l].weights.transposed());
    const Matrix& pre = trace.preacts[l - 1];
    for (std::size_t i = 0; i < down.size(); ++i)
      if (!(pre.data()[i] > 0.0)) down.data()[i] = 0.0;
    upstream = std::move(down);
  }
  return grads;
}

std::vector<DenseLayer> backward(const MlpModel& model, const Matrix& features,
                                 const Matrix& grad_logits) {
  return backward(model, forward_with_trace(model, features), grad_logits);
}

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch_size must be at least 1");
  require(lr >= 0.0 && std::isfinite(lr), "learning rate must be nonnegative");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight decay must be nonnegative");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must lie in (0, 1]");
  require(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must lie in [0, 1)");
  loss.validate();
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  const auto passed = std::count_if(cfg.lr_milestones.begin(), cfg.lr_milestones.end(),
                                    [epoch](std::size_t m) { return m <= epoch; });
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(passed));
}

void split_indices(std::size_t n, double val_fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train_idx, std::vector<std::size_t>& val_idx) {
  Rng rng(seed);
  const auto perm = rng_shuffle(rng, n);
  auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction + 0.5));
  if (n_val >= n) n_val = n == 0 ? 0 : n - 1;
  val_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  train_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
}

double classification_accuracy(const Matrix& logits, std::span<const int> labels) {
  require(logits.rows() == labels.size() && logits.rows() > 0, "accuracy needs matching rows");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r)
    hits += static_cast<int>(argmax_prediction(logits.row(r))) == labels[r] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

void sgd_step(MlpModel& model, std::vector<DenseLayer>& velocity,
              const std::vector<DenseLayer>& grads, double lr, double momentum,
              double weight_decay) {
  auto update = [&](std::span<double> w, std::span<double> v, std::span<const double> g) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
      w[i] -= lr * v[i];
    }
  };
  if (velocity.empty()) {
    for (const auto& layer : model.layers)
      velocity.push_back({Matrix(layer.weights.rows(), layer.weights.cols()),
                          std::vector<double>(layer.bias.size(), 0.0)});
  }
  require(velocity.size() == model.layers.size(), "velocity does not match the model");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    update(model.layers[l].weights.data(), velocity[l].weights.data(), grads[l].weights.data());
    update(model.layers[l].bias, velocity[l].bias, grads[l].bias);
  }
}

TrainResult train(const LabeledDataset& dataset, const std::vector<std::size_t>& hidden_dims,
                  const TrainConfig& cfg) {
  dataset.validate();
  cfg.validate();
  std::vector<std::size_t> dims{dataset.dims()};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(dataset.k);

  TrainResult result;
  split_indices(dataset.size(), cfg.val_fraction, derive_seed(cfg.seed, "split"),
                result.train_indices, result.val_indices);
  const LabeledDataset train_set = dataset.subset(result.train_indices);
  const LabeledDataset val_set =
      result.val_indices.empty() ? train_set : dataset.subset(result.val_indices);

  Rng init_rng(derive_seed(cfg.seed, "init"));
  MlpModel model = init_mlp(dims, init_rng);
  std::vector<DenseLayer> velocity;
  for (const auto& layer : model.layers)
    velocity.push_back({Matrix(layer.weights.rows(), layer.weights.cols()),
                        std::vector<double>(layer.bias.size(), 0.0)});

  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  const std::size_t n_train = train_set.size();
  double best_accuracy = -1.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    const auto order = rng_shuffle(shuffle_rng, n_train);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, n_train);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      Batch batch;
      const Matrix features = train_set.features.gather_rows(rows);
      batch.labels.reserve(rows.size());
      for (auto r : rows) batch.labels.push_back(train_set.labels[r]);
      const ForwardTrace trace = forward_with_trace(model, features);
      batch.logits = trace.logits();
      const LossOutput loss = combined_loss(batch, cfg.loss);
      loss_sum += loss.value * static_cast<double>(rows.size());
      sgd_step(model, velocity, backward(model, trace, loss.grad_logits), lr, cfg.momentum,
               cfg.weight_decay);
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(n_train));
    const double acc = classification_accuracy(forward(model, val_set.features), val_set.labels);
    result.val_accuracy.push_back(acc);
    if (acc > best_accuracy) {
      best_accuracy = acc;
      result.selected_epoch = epoch;
      result.model = model;
    }
  }
  if (cfg.epochs == 0) result.model = model;
  return result;
}

std::string model_to_json(const MlpModel& model) {
  json doc;
  doc["layer_dims"] = model.layer_dims;
  doc["activation"] = "relu";
  json weights = json::array();
  json biases = json::array();
  for (const auto& layer : model.layers) {
    weights.push_back(std::vector<double>(layer.weights.data().begin(), layer.weights.data().end()));
    biases.push_back(layer.bias);
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  return doc.dump() + "\n";
}

MlpModel model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model JSON: ") + e.what());
  }
  try {
    require(doc.value("activation", std::string("relu")) == "relu",
            "model JSON: only relu activation is supported");
    MlpModel model;
    model.layer_dims = doc.at("layer_dims").get<std::vector<std::size_t>>();
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    require(model.layer_dims.size() >= 2, "model JSON: layer_dims needs two entries");
    require(weights.size() + 1 == model.layer_dims.size() &&
                biases.size() + 1 == model.layer_dims.size(),
            "model JSON: layer count does not match layer_dims");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      auto flat = weights[l].get<std::vector<double>>();
      require(flat.size() == model.layer_dims[l] * model.layer_dims[l + 1],
              "model JSON: layer " + std::to_string(l) + " weight count mismatch");
      model.layers.push_back({Matrix(model.layer_dims[l], model.layer_dims[l + 1], std::move(flat)),
                              biases[l].get<std::vector<double>>()});
    }
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model JSON: ") + e.what());
  }
}

}  // namespace calibkit
