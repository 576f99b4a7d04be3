#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "calibkit/data.hpp"
#include "calibkit/error.hpp"
#include "calibkit/model.hpp"
#include "oracles.hpp"

namespace calibkit {
namespace {

MlpModel zero_model(std::vector<std::size_t> dims) {
  Rng rng(0);
  MlpModel m = init_mlp(dims, rng);
  for (auto& layer : m.layers) {
    std::fill(layer.weights.data().begin(), layer.weights.data().end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  return m;
}

// Flattened view of all parameters, in layer order: weights then bias.
std::vector<double*> parameters(MlpModel& m) {
  std::vector<double*> out;
  for (auto& layer : m.layers) {
    for (auto& w : layer.weights.data()) out.push_back(&w);
    for (auto& b : layer.bias) out.push_back(&b);
  }
  return out;
}

std::vector<double> flatten(const std::vector<DenseLayer>& layers) {
  std::vector<double> out;
  for (const auto& layer : layers) {
    out.insert(out.end(), layer.weights.data().begin(), layer.weights.data().end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

TEST(Init, ShapesAndBounds) {
  Rng rng(3);
  const auto m = init_mlp({5, 16, 8, 3}, rng);
  ASSERT_EQ(m.layers.size(), 3u);
  EXPECT_NO_THROW(m.validate());
  for (std::size_t l = 0; l < 3; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.layer_dims[l] + m.layer_dims[l + 1]));
    EXPECT_EQ(m.layers[l].weights.rows(), m.layer_dims[l]);
    EXPECT_EQ(m.layers[l].weights.cols(), m.layer_dims[l + 1]);
    for (double w : m.layers[l].weights.data()) EXPECT_LE(std::abs(w), bound);
    for (double b : m.layers[l].bias) EXPECT_EQ(b, 0.0);
  }
  Rng again(3);
  EXPECT_EQ(init_mlp({5, 16, 8, 3}, again), m);
  EXPECT_THROW(init_mlp({5}, rng), ValidationError);
}

TEST(Forward, Examples) {
  auto m = zero_model({3, 4, 2});
  m.layers[1].bias = {0.25, -1.5};
  Rng rng(1);
  const Matrix x = testing::random_logits(rng, 6, 3);
  const Matrix z = forward(m, x);
  for (std::size_t r = 0; r < 6; ++r) {
    EXPECT_EQ(z(r, 0), 0.25);
    EXPECT_EQ(z(r, 1), -1.5);
  }

  auto linear = zero_model({3, 3});
  linear.layers[0].weights = Matrix::identity(3);
  EXPECT_EQ(forward(linear, x), x);

  const auto trained = init_mlp({3, 8, 2}, rng);
  EXPECT_EQ(forward(trained, x), forward(trained, x));
  EXPECT_THROW(forward(trained, Matrix(2, 4)), ValidationError);
}

TEST(Forward, ReluHiddenLayer) {
  auto m = zero_model({1, 2, 1});
  m.layers[0].weights = Matrix{{1.0, -1.0}};
  m.layers[1].weights = Matrix{{1.0}, {1.0}};
  const Matrix z = forward(m, Matrix{{2.0}, {-3.0}});
  EXPECT_EQ(z(0, 0), 2.0);
  EXPECT_EQ(z(1, 0), 3.0);
}

TEST(Backward, Examples) {
  Rng rng(4);
  const auto m = init_mlp({4, 6, 3}, rng);
  const Matrix x = testing::random_logits(rng, 5, 4);
  for (const auto& g : backward(m, x, Matrix(5, 3))) {
    for (double v : g.weights.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.bias) EXPECT_EQ(v, 0.0);
  }

  const auto linear = init_mlp({4, 3}, rng);
  const Matrix gz = testing::random_logits(rng, 5, 3);
  const auto grads = backward(linear, x, gz);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double want = 0.0;
      for (std::size_t r = 0; r < 5; ++r) want += x(r, i) * gz(r, j);
      EXPECT_NEAR(grads[0].weights(i, j), want, 1e-12);
    }
  for (std::size_t j = 0; j < 3; ++j) {
    double want = 0.0;
    for (std::size_t r = 0; r < 5; ++r) want += gz(r, j);
    EXPECT_NEAR(grads[0].bias[j], want, 1e-12);
  }
}

TEST(Backward, MatchesFiniteDifferencesOfCombinedLoss) {
  Rng rng(12);
  LossSpec spec;
  spec.classification = ClassificationLoss::focal;
  spec.gamma = 2.0;
  spec.auxiliary = AuxiliaryLoss::mdca;
  spec.beta = 1.0;
  int checked = 0;
  while (checked < 10) {
    MlpModel m = init_mlp({3, 7, 5, 4}, rng);
    for (auto& layer : m.layers)
      for (auto& b : layer.bias) b = 0.1 * rng.next_normal();
    const Matrix x = testing::random_logits(rng, 6, 3);
    const auto y = testing::random_labels(rng, 6, 4);
    const Matrix logits = forward(m, x);
    if (testing::mdca_kink_distance(logits, y) < 1e-6) continue;
    // Skip draws with a hidden unit near its ReLU hinge.
    const auto trace = forward_with_trace(m, x);
    bool hinge = false;
    for (std::size_t l = 0; l + 1 < trace.preacts.size(); ++l)
      for (double v : trace.preacts[l].data()) hinge = hinge || std::abs(v) < 1e-4;
    if (hinge) continue;

    const auto analytic = flatten(backward(m, trace, combined_loss(Batch{logits, y}, spec).grad_logits));
    std::vector<double> numeric;
    for (double* p : parameters(m)) {
      const double saved = *p;
      *p = saved + 1e-6;
      const double up = combined_loss(Batch{forward(m, x), y}, spec).value;
      *p = saved - 1e-6;
      const double down = combined_loss(Batch{forward(m, x), y}, spec).value;
      *p = saved;
      numeric.push_back((up - down) / 2e-6);
    }
    ASSERT_LT(testing::relative_error(analytic, numeric), 1e-4);
    ++checked;
  }
}

TEST(Sgd, SingleStepIsPlainGradientDescent) {
  Rng rng(13);
  MlpModel m = init_mlp({3, 5, 2}, rng);
  const MlpModel before = m;
  const Matrix x = testing::random_logits(rng, 1, 3);
  const std::vector<int> y{1};
  const auto grads = backward(m, x, nll_loss(Batch{forward(m, x), y}).grad_logits);
  std::vector<DenseLayer> velocity;
  sgd_step(m, velocity, grads, 0.05, 0.0, 0.0);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    for (std::size_t i = 0; i < m.layers[l].weights.size(); ++i)
      EXPECT_EQ(m.layers[l].weights.data()[i],
                before.layers[l].weights.data()[i] - 0.05 * grads[l].weights.data()[i]);
    for (std::size_t i = 0; i < m.layers[l].bias.size(); ++i)
      EXPECT_EQ(m.layers[l].bias[i], before.layers[l].bias[i] - 0.05 * grads[l].bias[i]);
  }
}

TEST(Sgd, MomentumAndWeightDecay) {
  MlpModel m = zero_model({1, 1});
  m.layers[0].weights(0, 0) = 2.0;
  std::vector<DenseLayer> grads{DenseLayer{Matrix{{1.0}}, {0.0}}};
  std::vector<DenseLayer> velocity;
  sgd_step(m, velocity, grads, 0.1, 0.9, 0.5);
  // v = 1 + 0.5*2 = 2, w = 2 - 0.2
  EXPECT_DOUBLE_EQ(m.layers[0].weights(0, 0), 1.8);
  sgd_step(m, velocity, grads, 0.1, 0.9, 0.5);
  // v = 0.9*2 + 1 + 0.5*1.8 = 3.7, w = 1.8 - 0.37
  EXPECT_DOUBLE_EQ(m.layers[0].weights(0, 0), 1.43);
}

TEST(Schedule, MilestonesMultiplyByDecay) {
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.lr_decay = 0.1;
  cfg.lr_milestones = {5, 8};
  EXPECT_EQ(learning_rate_at(cfg, 0), 0.1);
  EXPECT_EQ(learning_rate_at(cfg, 4), 0.1);
  EXPECT_EQ(learning_rate_at(cfg, 5), 0.1 * std::pow(0.1, 1));
  EXPECT_EQ(learning_rate_at(cfg, 7), 0.1 * std::pow(0.1, 1));
  EXPECT_EQ(learning_rate_at(cfg, 8), 0.1 * std::pow(0.1, 2));
  EXPECT_EQ(learning_rate_at(cfg, 100), 0.1 * std::pow(0.1, 2));
}

TEST(Split, PartitionsIndices) {
  for (std::size_t n : {1u, 2u, 10u, 101u, 3000u}) {
    for (double f : {0.0, 0.1, 0.5, 0.99}) {
      std::vector<std::size_t> tr, va;
      split_indices(n, f, 42, tr, va);
      EXPECT_GE(tr.size(), 1u);
      std::vector<std::size_t> all = tr;
      all.insert(all.end(), va.begin(), va.end());
      std::sort(all.begin(), all.end());
      for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
      ASSERT_EQ(all.size(), n);
    }
  }
  std::vector<std::size_t> tr, va;
  split_indices(3000, 0.1, 1, tr, va);
  EXPECT_EQ(va.size(), 300u);
}

TEST(Config, Validates) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.lr = -1;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.val_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

class Training : public ::testing::Test {
 protected:
  LabeledDataset data_ = gen_blobs({3, 600, 2, 6.0}, 5);
};

TEST_F(Training, ZeroLearningRateKeepsInitialWeights) {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 0.0;
  cfg.seed = 9;
  const auto result = train(data_, {8}, cfg);
  Rng init(derive_seed(9, "init"));
  EXPECT_EQ(result.model, init_mlp({2, 8, 3}, init));
}

TEST_F(Training, SameSeedIsBitIdentical) {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 17;
  cfg.loss.classification = ClassificationLoss::focal;
  cfg.loss.auxiliary = AuxiliaryLoss::mdca;
  cfg.loss.beta = 1.0;
  const auto a = train(data_, {8}, cfg);
  const auto b = train(data_, {8}, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.val_accuracy, b.val_accuracy);
  EXPECT_EQ(a.selected_epoch, b.selected_epoch);
  cfg.seed = 18;
  EXPECT_FALSE(train(data_, {8}, cfg).model == a.model);
}

TEST_F(Training, SelectsEarliestBestValidationEpoch) {
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.seed = 2;
  const auto r = train(data_, {8}, cfg);
  ASSERT_EQ(r.val_accuracy.size(), 8u);
  ASSERT_EQ(r.train_loss.size(), 8u);
  const auto best = std::max_element(r.val_accuracy.begin(), r.val_accuracy.end());
  EXPECT_EQ(r.selected_epoch, static_cast<std::size_t>(best - r.val_accuracy.begin()));
  const auto val = data_.subset(r.val_indices);
  EXPECT_EQ(classification_accuracy(forward(r.model, val.features), val.labels), *best);
}

TEST(TrainingBlobs, NllReachesHighValidationAccuracy) {
  const auto data = gen_blobs({3, 3000, 2, 6.0}, 1);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 1;
  const auto r = train(data, {32, 32}, cfg);
  EXPECT_GT(r.val_accuracy[r.selected_epoch], 0.9);
}

TEST(ModelJson, RoundTripsExactly) {
  Rng rng(14);
  const auto m = init_mlp({4, 9, 3}, rng);
  const auto text = model_to_json(m);
  EXPECT_EQ(model_from_json(text), m);
  EXPECT_EQ(model_to_json(model_from_json(text)), text);
  EXPECT_THROW(model_from_json("{}"), ValidationError);
  EXPECT_THROW(model_from_json("not json"), ValidationError);
  EXPECT_THROW(model_from_json(R"({"layer_dims":[2,2],"activation":"relu","weights":[[1,2,3]],"biases":[[0,0]]})"),
               ValidationError);
}

TEST(Accuracy, CountsArgmaxHits) {
  const Matrix z{{1.0, 2.0}, {3.0, 0.0}, {0.5, 0.5}};
  EXPECT_DOUBLE_EQ(classification_accuracy(z, std::vector<int>{1, 1, 0}), 2.0 / 3.0);
}

}  // namespace
}  // namespace calibkit
