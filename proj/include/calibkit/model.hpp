#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "calibkit/losses.hpp"
#include "calibkit/numerics.hpp"

namespace calibkit {

struct LabeledDataset;

/// One affine layer: out = in * weights + bias, weights shaped (in x out).
struct DenseLayer {
  Matrix weights;
  std::vector<double> bias;
};

/// Multilayer perceptron with ReLU between layers and affine logits.
struct MlpModel {
  std::vector<std::size_t> layer_dims;  // input D, hidden..., output K
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  void validate() const;

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

inline bool operator==(const DenseLayer& a, const DenseLayer& b) {
  return a.weights == b.weights && a.bias == b.bias;
}

/// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
MlpModel init_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng);

/// Activations kept for the backward pass. inputs[l] feeds layer l;
/// preacts[l] is that layer's affine output.
struct ForwardTrace {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preacts;

  const Matrix& logits() const { return preacts.back(); }
};

Matrix forward(const MlpModel& model, const Matrix& features);
ForwardTrace forward_with_trace(const MlpModel& model, const Matrix& features);

/// Gradients of sum(logits .* grad_logits) with respect to every parameter,
/// in the same layout as the model's layers. ReLU subgradient at 0 is 0.
std::vector<DenseLayer> backward(const MlpModel& model, const ForwardTrace& trace,
                                 const Matrix& grad_logits);
std::vector<DenseLayer> backward(const MlpModel& model, const Matrix& features,
                                 const Matrix& grad_logits);

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::vector<std::size_t> lr_milestones;
  double lr_decay = 0.1;
  std::uint64_t seed = 0;
  LossSpec loss;
  double val_fraction = 0.1;

  void validate() const;
};

/// Learning rate in effect during 0-based `epoch`: lr * decay^k where k is
/// the number of milestones <= epoch.
double learning_rate_at(const TrainConfig& cfg, std::size_t epoch);

struct TrainResult {
  MlpModel model;  // snapshot from the selected epoch
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  std::size_t selected_epoch = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Seeded train/validation split of n samples; validation gets
/// round(n * val_fraction) samples, training keeps at least one.
void split_indices(std::size_t n, double val_fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& val);

/// Minibatch SGD with momentum and coupled weight decay. Returns the model
/// from the epoch with the best validation accuracy (earliest on ties).
TrainResult train(const LabeledDataset& dataset, const std::vector<std::size_t>& hidden_dims,
                  const TrainConfig& cfg);

/// One SGD-with-momentum step: v = momentum*v + g + wd*w; w -= lr*v.
/// An empty velocity starts at zero.
void sgd_step(MlpModel& model, std::vector<DenseLayer>& velocity,
              const std::vector<DenseLayer>& grads, double lr, double momentum,
              double weight_decay);

double classification_accuracy(const Matrix& logits, std::span<const int> labels);

std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);

}  // namespace calibkit
