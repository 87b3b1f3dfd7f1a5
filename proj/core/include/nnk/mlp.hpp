#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "nnk/types.hpp"

namespace nnk {

enum class Activation { kRelu, kNone };

struct Layer {
  Matrix weight;       // out x in
  Vector bias;         // out
  Activation act = Activation::kNone;
  double dropout_rate = 0.0; // inverted dropout, applied after the activation
};

/// Small fully connected embedding network. The final layer is linear
/// (no ReLU) and is the embedding layer; dropout may be attached to it.
struct MlpModel {
  std::vector<Layer> layers;
  std::uint64_t revision = 0; // bumped by sgd_step; stamps forward caches

  int input_dim() const;
  int output_dim() const;
  void validate() const;
};

/// Xavier-uniform initialised network: ReLU hidden layers, a linear embedding
/// layer of width embedding_dim carrying `embedding_dropout`.
MlpModel make_mlp(int input_dim, const std::vector<int>& hidden_dims, int embedding_dim,
                  double embedding_dropout, std::uint64_t seed);

/// Same network with a C-way linear head appended, for the softmax baseline.
MlpModel with_softmax_head(const MlpModel& base, int num_classes, std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 1e-5;
  int batch_size = 20;
  double weight_decay = 2e-4;
  int epochs = 100;
  std::uint64_t seed = 0;
  bool learn_kernel_weights = true;
  bool freeze_network = false;
  bool dropout_active = true;

  void validate() const;
};

/// Everything backward() needs to replay the forward pass: per-layer inputs,
/// pre-activations and dropout masks, stamped with the model revision.
struct ForwardCache {
  std::vector<Matrix> inputs;   // input to each layer
  std::vector<Matrix> pre_act;  // z = x W^T + b
  std::vector<Matrix> masks;    // empty matrix when no dropout was applied
  std::uint64_t revision = 0;
};

/// Row-per-example batch forward. Dropout masks scale surviving units by
/// 1/(1-rate) so inference needs no rescaling. Deterministic given the rng
/// state. Pass a cache to enable backward().
Matrix forward(const MlpModel& model, const Matrix& batch, bool dropout_active,
               std::mt19937_64& dropout_rng, ForwardCache* cache = nullptr);

struct ParamGrads {
  std::vector<Matrix> d_weight;
  std::vector<Vector> d_bias;
};

/// Chain-rule gradients for every weight and bias given dL/d(output rows).
/// Throws if the cache does not match the model's current revision.
ParamGrads backward(const MlpModel& model, const ForwardCache& cache,
                    const Matrix& d_output);

/// One SGD step: p <- p - lr (g + weight_decay p) for network parameters
/// (skipped when freeze_network); kernel weights take lr g without decay when
/// learn_kernel_weights, then get projected back to >= 1e-6.
void sgd_step(MlpModel& model, Vector* kernel_weights, const ParamGrads& grads,
              const std::vector<std::pair<int, double>>& kernel_weight_grads,
              const TrainConfig& cfg);

/// Mean cross-entropy of softmax over logits, max-shifted; gradient has the
/// standard softmax-minus-onehot form, divided by the batch size.
std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits,
                                                const std::vector<int>& labels);

/// Composed baseline loss: forward with the C-way head, cross-entropy, full
/// backward. Returns the mean loss and all parameter gradients.
std::pair<double, ParamGrads> softmax_head_loss(const MlpModel& model, const Matrix& batch,
                                                const std::vector<int>& labels,
                                                bool dropout_active,
                                                std::mt19937_64& dropout_rng);

}  // namespace nnk
