#include <doctest.h>

#include <cmath>

#include "nnk/mlp.hpp"
#include "nnk/rng.hpp"
#include "support/oracles.hpp"

using namespace nnk;

namespace {

MlpModel hand_model() {
  MlpModel model;
  Layer l0;
  l0.weight = Matrix(2, 2);
  l0.weight << 1.0, 2.0,
               3.0, 4.0;
  l0.bias = Vector(2);
  l0.bias << 0.5, -0.5;
  l0.act = Activation::kRelu;
  Layer l1;
  l1.weight = Matrix(2, 2);
  l1.weight << 1.0, -1.0,
               0.5, 0.25;
  l1.bias = Vector(2);
  l1.bias << 0.0, 1.0;
  l1.act = Activation::kNone;
  model.layers = {l0, l1};
  return model;
}

// Collect all parameters of a model into one flat vector (weights row-major,
// then bias, per layer).
Vector flatten(const MlpModel& model) {
  std::vector<double> values;
  for (const Layer& layer : model.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) values.push_back(layer.weight(r, c));
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) values.push_back(layer.bias[i]);
  }
  return Eigen::Map<Vector>(values.data(), values.size());
}

void unflatten(MlpModel& model, const Vector& flat) {
  Eigen::Index pos = 0;
  for (Layer& layer : model.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = flat[pos++];
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = flat[pos++];
  }
}

Vector flatten_grads(const ParamGrads& grads) {
  std::vector<double> values;
  for (std::size_t l = 0; l < grads.d_weight.size(); ++l) {
    for (Eigen::Index r = 0; r < grads.d_weight[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < grads.d_weight[l].cols(); ++c) {
        values.push_back(grads.d_weight[l](r, c));
      }
    }
    for (Eigen::Index i = 0; i < grads.d_bias[l].size(); ++i) values.push_back(grads.d_bias[l][i]);
  }
  return Eigen::Map<Vector>(values.data(), values.size());
}

}  // namespace

TEST_CASE("forward") {
  SUBCASE("deterministic without dropout") {
    const MlpModel model = make_mlp(6, {8}, 4, 0.0, 99);
    Matrix batch(3, 6);
    batch.setRandom();
    auto rng1 = make_rng(1, "d");
    auto rng2 = make_rng(2, "d");
    const Matrix a = forward(model, batch, false, rng1);
    const Matrix b = forward(model, batch, false, rng2);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("identity single layer reproduces the input") {
    MlpModel model;
    Layer layer;
    layer.weight = Matrix::Identity(3, 3);
    layer.bias = Vector::Zero(3);
    model.layers = {layer};
    Matrix batch(2, 3);
    batch << 1.0, -2.0, 3.0,
             0.5, 0.25, -0.125;
    auto rng = make_rng(0, "d");
    const Matrix out = forward(model, batch, false, rng);
    CHECK((out - batch).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("two-layer net matches hand-computed products") {
    const MlpModel model = hand_model();
    Matrix batch(2, 2);
    batch << 1.0, -1.0,
             0.5, 0.5;
    auto rng = make_rng(0, "d");
    const Matrix out = forward(model, batch, false, rng);
    CHECK(out(0, 0) == doctest::Approx(0.0));
    CHECK(out(0, 1) == doctest::Approx(1.0));
    CHECK(out(1, 0) == doctest::Approx(-1.0));
    CHECK(out(1, 1) == doctest::Approx(2.75));
  }

  SUBCASE("dimension mismatch is a hard error") {
    const MlpModel model = make_mlp(6, {}, 4, 0.0, 1);
    Matrix bad(2, 5);
    bad.setZero();
    auto rng = make_rng(0, "d");
    CHECK_THROWS_AS(forward(model, bad, false, rng), std::invalid_argument);
  }

  SUBCASE("inverted dropout: masked expectation equals the clean output") {
    const MlpModel model = make_mlp(4, {6}, 3, 0.4, 5);
    Matrix batch(1, 4);
    batch << 0.3, -0.7, 1.1, 0.2;
    auto clean_rng = make_rng(0, "d");
    const Matrix clean = forward(model, batch, false, clean_rng);
    auto rng = make_rng(123, "dropout");
    Matrix sum = Matrix::Zero(1, 3);
    const int masks = 10000;
    for (int i = 0; i < masks; ++i) {
      sum += forward(model, batch, true, rng);
    }
    const Matrix mean = sum / masks;
    for (int j = 0; j < 3; ++j) {
      CHECK(mean(0, j) == doctest::Approx(clean(0, j)).epsilon(1e-2).scale(1.0));
    }
  }
}

TEST_CASE("backward") {
  SUBCASE("zero upstream gradient zeroes every parameter gradient") {
    const MlpModel model = make_mlp(5, {7}, 3, 0.0, 11);
    Matrix batch(4, 5);
    batch.setRandom();
    auto rng = make_rng(0, "d");
    ForwardCache cache;
    forward(model, batch, false, rng, &cache);
    const ParamGrads grads = backward(model, cache, Matrix::Zero(4, 3));
    CHECK(flatten_grads(grads).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("parameter gradients match finite differences of a composed loss") {
    auto rng = make_rng(31, "mlp-fd");
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 64; ++trial) {
      const int in = 2 + trial % 4;
      const int hidden = 2 + (trial / 4) % 4;
      const int out = 1 + trial % 3;
      MlpModel model = make_mlp(in, {hidden}, out, 0.0, 1000 + trial);
      Matrix batch(2, in);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < in; ++c) batch(r, c) = gauss(rng);
      }
      Matrix direction(2, out); // L = <output, direction>
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < out; ++c) direction(r, c) = gauss(rng);
      }

      auto fwd_rng = make_rng(0, "d");
      ForwardCache cache;
      forward(model, batch, false, fwd_rng, &cache);
      const ParamGrads grads = backward(model, cache, direction);
      const Vector analytic = flatten_grads(grads);

      const Vector numeric = oracle::central_difference(
          [&](const Vector& flat) {
            MlpModel probe = model;
            unflatten(probe, flat);
            auto r2 = make_rng(0, "d");
            return (forward(probe, batch, false, r2).cwiseProduct(direction)).sum();
          },
          flatten(model));
      CHECK(oracle::grad_close(analytic, numeric));
    }
  }

  SUBCASE("stale cache is a hard error") {
    MlpModel model = make_mlp(3, {}, 2, 0.0, 7);
    Matrix batch(1, 3);
    batch.setOnes();
    auto rng = make_rng(0, "d");
    ForwardCache cache;
    forward(model, batch, false, rng, &cache);
    TrainConfig cfg;
    sgd_step(model, nullptr, backward(model, cache, Matrix::Zero(1, 2)), {}, cfg);
    CHECK_THROWS_AS(backward(model, cache, Matrix::Zero(1, 2)), std::invalid_argument);
  }
}

TEST_CASE("sgd_step") {
  SUBCASE("zero gradients and zero decay leave parameters unchanged") {
    MlpModel model = make_mlp(3, {4}, 2, 0.0, 13);
    const MlpModel before = model;
    ParamGrads grads;
    for (const Layer& layer : model.layers) {
      grads.d_weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
      grads.d_bias.push_back(Vector::Zero(layer.bias.size()));
    }
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    sgd_step(model, nullptr, grads, {}, cfg);
    CHECK((flatten(model) - flatten(before)).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("scalar case: lr 0.1, g 1, p 1, wd 0 gives 0.9") {
    MlpModel model;
    Layer layer;
    layer.weight = Matrix::Ones(1, 1);
    layer.bias = Vector::Zero(1);
    model.layers = {layer};
    ParamGrads grads;
    grads.d_weight.push_back(Matrix::Ones(1, 1));
    grads.d_bias.push_back(Vector::Zero(1));
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.0;
    sgd_step(model, nullptr, grads, {}, cfg);
    CHECK(model.layers[0].weight(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
  }

  SUBCASE("weight decay matches the closed-form single step") {
    MlpModel model;
    Layer layer;
    layer.weight = Matrix::Constant(1, 1, 2.0);
    layer.bias = Vector::Zero(1);
    model.layers = {layer};
    ParamGrads grads;
    grads.d_weight.push_back(Matrix::Constant(1, 1, 0.5));
    grads.d_bias.push_back(Vector::Zero(1));
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.weight_decay = 0.0002;
    sgd_step(model, nullptr, grads, {}, cfg);
    // p - lr (g + wd p) = 2 - 0.01 (0.5 + 0.0002 * 2)
    CHECK(model.layers[0].weight(0, 0) == doctest::Approx(2.0 - 0.01 * (0.5 + 0.0004)).epsilon(1e-15));
  }

  SUBCASE("frozen network keeps parameters bit-identical") {
    MlpModel model = make_mlp(3, {4}, 2, 0.0, 17);
    const Vector before = flatten(model);
    ParamGrads grads;
    for (const Layer& layer : model.layers) {
      grads.d_weight.push_back(Matrix::Ones(layer.weight.rows(), layer.weight.cols()));
      grads.d_bias.push_back(Vector::Ones(layer.bias.size()));
    }
    TrainConfig cfg;
    cfg.freeze_network = true;
    Vector weights = Vector::Ones(3);
    sgd_step(model, &weights, grads, {{1, 2.0}}, cfg);
    CHECK((flatten(model) - before).cwiseAbs().maxCoeff() == 0.0);
    CHECK(weights[1] < 1.0); // kernel weights still learn
  }

  SUBCASE("kernel weights are projected to stay positive") {
    MlpModel model = make_mlp(2, {}, 2, 0.0, 19);
    ParamGrads grads;
    for (const Layer& layer : model.layers) {
      grads.d_weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
      grads.d_bias.push_back(Vector::Zero(layer.bias.size()));
    }
    TrainConfig cfg;
    cfg.learning_rate = 10.0;
    Vector weights = Vector::Constant(2, 0.5);
    sgd_step(model, &weights, grads, {{0, 100.0}}, cfg);
    CHECK(weights[0] == 1e-6);
  }
}

TEST_CASE("softmax head") {
  SUBCASE("uniform logits give ln C") {
    Matrix logits = Matrix::Zero(3, 4);
    const auto [loss, grad] = softmax_cross_entropy(logits, {0, 1, 2});
    CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }

  SUBCASE("confident correct logit drives the loss to zero") {
    Matrix logits = Matrix::Zero(1, 4);
    logits(0, 2) = 50.0;
    const auto [loss, grad] = softmax_cross_entropy(logits, {2});
    CHECK(loss < 1e-12);
  }

  SUBCASE("label out of range is a hard error") {
    Matrix logits = Matrix::Zero(1, 4);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {4}), std::invalid_argument);
  }

  SUBCASE("gradient matches finite differences") {
    auto rng = make_rng(41, "softmax-fd");
    std::normal_distribution<double> gauss(0.0, 2.0);
    Matrix logits(3, 5);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 5; ++c) logits(r, c) = gauss(rng);
    }
    const std::vector<int> labels = {3, 0, 4};
    const auto [loss, grad] = softmax_cross_entropy(logits, labels);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 5; ++c) {
        const double fd = oracle::central_difference_1d(
            [&](double v) {
              Matrix probe = logits;
              probe(r, c) = v;
              return softmax_cross_entropy(probe, labels).first;
            },
            logits(r, c));
        CHECK(oracle::grad_close(grad(r, c), fd));
      }
    }
  }

  SUBCASE("composed head loss gradients match finite differences") {
    const MlpModel base = make_mlp(4, {5}, 3, 0.0, 43);
    MlpModel model = with_softmax_head(base, 4, 43);
    Matrix batch(2, 4);
    batch.setRandom();
    const std::vector<int> labels = {1, 3};
    auto rng = make_rng(0, "d");
    const auto [loss, grads] = softmax_head_loss(model, batch, labels, false, rng);
    const Vector analytic = flatten_grads(grads);
    const Vector numeric = oracle::central_difference(
        [&](const Vector& flat) {
          MlpModel probe = model;
          unflatten(probe, flat);
          auto r2 = make_rng(0, "d");
          return softmax_head_loss(probe, batch, labels, false, r2).first;
        },
        flatten(model));
    CHECK(oracle::grad_close(analytic, numeric));
  }
}

TEST_CASE("initialisation is seeded and deterministic") {
  const MlpModel a = make_mlp(8, {16, 8}, 4, 0.1, 77);
  const MlpModel b = make_mlp(8, {16, 8}, 4, 0.1, 77);
  const MlpModel c = make_mlp(8, {16, 8}, 4, 0.1, 78);
  CHECK((flatten(a) - flatten(b)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((flatten(a) - flatten(c)).cwiseAbs().maxCoeff() > 0.0);
}
