#include "nnk/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "nnk/rng.hpp"

namespace nnk {

int MlpModel::input_dim() const {
  if (layers.empty()) throw std::logic_error("MlpModel: no layers");
  return static_cast<int>(layers.front().weight.cols());
}

int MlpModel::output_dim() const {
  if (layers.empty()) throw std::logic_error("MlpModel: no layers");
  return static_cast<int>(layers.back().weight.rows());
}

void MlpModel::validate() const {
  if (layers.empty()) throw std::invalid_argument("MlpModel: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    if (layer.weight.rows() != layer.bias.size()) {
      throw std::invalid_argument("MlpModel: bias size does not match layer output");
    }
    if (l > 0 && layers[l - 1].weight.rows() != layer.weight.cols()) {
      throw std::invalid_argument("MlpModel: consecutive layer dimensions do not chain");
    }
    if (layer.dropout_rate < 0.0 || layer.dropout_rate >= 1.0) {
      throw std::invalid_argument("MlpModel: dropout_rate outside [0, 1)");
    }
  }
  if (layers.back().act != Activation::kNone) {
    throw std::invalid_argument("MlpModel: final layer must be linear");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
}

namespace {

Layer xavier_layer(int in, int out, Activation act, double dropout, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  Layer layer;
  layer.weight = Matrix(out, in);
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < in; ++c) layer.weight(r, c) = uniform(rng);
  }
  layer.bias = Vector::Zero(out);
  layer.act = act;
  layer.dropout_rate = dropout;
  return layer;
}

}  // namespace

MlpModel make_mlp(int input_dim, const std::vector<int>& hidden_dims, int embedding_dim,
                  double embedding_dropout, std::uint64_t seed) {
  if (input_dim < 1 || embedding_dim < 1) {
    throw std::invalid_argument("make_mlp: dimensions must be >= 1");
  }
  auto rng = make_rng(seed, "init");
  MlpModel model;
  int in = input_dim;
  for (int h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("make_mlp: hidden width must be >= 1");
    model.layers.push_back(xavier_layer(in, h, Activation::kRelu, 0.0, rng));
    in = h;
  }
  model.layers.push_back(xavier_layer(in, embedding_dim, Activation::kNone, embedding_dropout, rng));
  model.validate();
  return model;
}

MlpModel with_softmax_head(const MlpModel& base, int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("with_softmax_head: need >= 2 classes");
  auto rng = make_rng(seed, "init-head");
  MlpModel model = base;
  model.layers.push_back(
      xavier_layer(base.output_dim(), num_classes, Activation::kNone, 0.0, rng));
  model.validate();
  return model;
}

Matrix forward(const MlpModel& model, const Matrix& batch, bool dropout_active,
               std::mt19937_64& dropout_rng, ForwardCache* cache) {
  if (batch.cols() != model.input_dim()) {
    throw std::invalid_argument("forward: batch dimension does not match first layer");
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre_act.clear();
    cache->masks.clear();
    cache->revision = model.revision;
  }

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix activ = batch;
  for (const Layer& layer : model.layers) {
    if (cache) cache->inputs.push_back(activ);
    Matrix z = activ * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (cache) cache->pre_act.push_back(z);

    if (layer.act == Activation::kRelu) {
      activ = z.cwiseMax(0.0);
    } else {
      activ = std::move(z);
    }

    Matrix mask;
    if (dropout_active && layer.dropout_rate > 0.0) {
      const double keep = 1.0 - layer.dropout_rate;
      mask = Matrix(activ.rows(), activ.cols());
      for (Eigen::Index r = 0; r < mask.rows(); ++r) {
        for (Eigen::Index c = 0; c < mask.cols(); ++c) {
          mask(r, c) = uniform(dropout_rng) < keep ? 1.0 / keep : 0.0;
        }
      }
      activ = activ.cwiseProduct(mask);
    }
    if (cache) cache->masks.push_back(std::move(mask));
  }
  return activ;
}

ParamGrads backward(const MlpModel& model, const ForwardCache& cache,
                    const Matrix& d_output) {
  if (cache.revision != model.revision || cache.inputs.size() != model.layers.size()) {
    throw std::invalid_argument("backward: cache is stale for this model");
  }
  if (d_output.rows() != cache.inputs.front().rows() ||
      d_output.cols() != model.output_dim()) {
    throw std::invalid_argument("backward: upstream gradient shape mismatch");
  }

  const int L = static_cast<int>(model.layers.size());
  ParamGrads grads;
  grads.d_weight.resize(L);
  grads.d_bias.resize(L);

  Matrix g = d_output;
  for (int l = L - 1; l >= 0; --l) {
    const Layer& layer = model.layers[l];
    if (cache.masks[l].size() > 0) {
      g = g.cwiseProduct(cache.masks[l]);
    }
    if (layer.act == Activation::kRelu) {
      g = g.cwiseProduct((cache.pre_act[l].array() > 0.0).cast<double>().matrix());
    }
    grads.d_weight[l].noalias() = g.transpose() * cache.inputs[l];
    grads.d_bias[l] = g.colwise().sum().transpose();
    if (l > 0) g = g * layer.weight;
  }
  return grads;
}

void sgd_step(MlpModel& model, Vector* kernel_weights, const ParamGrads& grads,
              const std::vector<std::pair<int, double>>& kernel_weight_grads,
              const TrainConfig& cfg) {
  cfg.validate();
  if (!cfg.freeze_network) {
    if (grads.d_weight.size() != model.layers.size()) {
      throw std::invalid_argument("sgd_step: gradient layer count mismatch");
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      Layer& layer = model.layers[l];
      layer.weight -= cfg.learning_rate * (grads.d_weight[l] + cfg.weight_decay * layer.weight);
      layer.bias -= cfg.learning_rate * (grads.d_bias[l] + cfg.weight_decay * layer.bias);
    }
  }
  if (cfg.learn_kernel_weights && kernel_weights != nullptr) {
    for (const auto& [id, g] : kernel_weight_grads) {
      double& w = (*kernel_weights)[id];
      w = std::max(w - cfg.learning_rate * g, 1e-6);
    }
  }
  ++model.revision;
}

std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits,
                                                const std::vector<int>& labels) {
  const int batch = static_cast<int>(logits.rows());
  const int C = static_cast<int>(logits.cols());
  if (static_cast<int>(labels.size()) != batch) {
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  }
  Matrix d = Matrix(batch, C);
  double loss = 0.0;
  for (int r = 0; r < batch; ++r) {
    if (labels[r] < 0 || labels[r] >= C) {
      throw std::invalid_argument("softmax_cross_entropy: label outside [0, C)");
    }
    const double shift = logits.row(r).maxCoeff();
    Eigen::RowVectorXd exps = (logits.row(r).array() - shift).exp();
    const double total = exps.sum();
    loss += std::log(total) + shift - logits(r, labels[r]);
    d.row(r) = exps / total;
    d(r, labels[r]) -= 1.0;
  }
  loss /= batch;
  d /= batch;
  return {loss, std::move(d)};
}

std::pair<double, ParamGrads> softmax_head_loss(const MlpModel& model, const Matrix& batch,
                                                const std::vector<int>& labels,
                                                bool dropout_active,
                                                std::mt19937_64& dropout_rng) {
  ForwardCache cache;
  const Matrix logits = forward(model, batch, dropout_active, dropout_rng, &cache);
  auto [loss, d_logits] = softmax_cross_entropy(logits, labels);
  return {loss, backward(model, cache, d_logits)};
}

}  // namespace nnk
