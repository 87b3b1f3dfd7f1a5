#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nnk/types.hpp"

namespace nnk {

struct KernelConfig {
  double sigma = 10.0;          // global kernel width, shared by all centres
  double epsilon_floor = 1e-30; // probability clamp when the true class is absent
  bool self_exclude = true;     // training examples never see their own centre

  void validate() const; // throws std::invalid_argument on violation
};

/// Frozen snapshot of the training-set embeddings acting as Gaussian centres,
/// together with their labels and the learned per-centre weights. The bank is
/// immutable between refreshes; only the weights move with SGD.
struct CentreBank {
  Matrix centres;                  // m x d
  std::vector<int> labels;         // m entries, dense ids in [0, num_classes)
  Vector weights;                  // m entries, strictly positive
  int num_classes = 0;
  std::uint64_t version = 0;

  int size() const { return static_cast<int>(centres.rows()); }
  int dim() const { return static_cast<int>(centres.cols()); }
  void validate() const;
};

struct ClassDistribution {
  Vector probs; // one entry per class, sums to 1

  // Predicted label; ties resolved to the lowest class id.
  int argmax() const;
};

/// Gradients of the neighbourhood kernel loss. The bank centres are constant
/// between refreshes, so no gradient flows to centre coordinates.
struct LossGradients {
  Vector d_embedding;                              // dL/dx
  std::vector<std::pair<int, double>> d_weights;   // centre id -> dL/dw, neighbour set only
  bool clamped = false;                            // true class absent / probability floored
};

/// exp(-||x - c||^2 / (2 sigma^2)); 1 exactly when x == c.
double kernel_value(const ConstVectorRef& x, const ConstVectorRef& c, double sigma);

/// Log-domain weighted kernel sums over a neighbour list.
/// log_sum       = log sum_{j in N} w_j f(x, c_j)
/// log_per_class = log sum_{i in N, label_i = Q} w_i f(x, c_i), -inf if Q absent.
/// Exponents are shifted by the minimum squared distance in the list before
/// exponentiation, so both stay finite for arbitrarily distant centres.
struct KernelSums {
  double log_sum;
  Vector log_per_class;
};
KernelSums log_kernel_sums(const ConstVectorRef& x, const CentreBank& bank,
                           std::span<const std::uint32_t> neighbours,
                           const KernelConfig& cfg);

/// Posterior over class labels from the weighted kernel sums restricted to the
/// neighbour list. With the full centre set as neighbours this is the exact
/// classifier; with a k-NN list it is the scalable approximation.
ClassDistribution classify(const ConstVectorRef& x, const CentreBank& bank,
                           std::span<const std::uint32_t> neighbours,
                           const KernelConfig& cfg);

/// -ln max(Pr(x in true_class), epsilon_floor). Finite for any input.
double nnk_loss(const ConstVectorRef& x, int true_class, const CentreBank& bank,
                std::span<const std::uint32_t> neighbours, const KernelConfig& cfg);

/// Loss plus analytic gradients w.r.t. the query embedding and the neighbour
/// weights. With p_j = w_j f_j / S and q_j = w_j f_j / S_R (R the true class):
///   dL/dx   = sum_j (p_j - [label_j = R] q_j) * (-(x - c_j) / sigma^2)
///   dL/dw_j = p_j / w_j - [label_j = R] q_j / w_j
/// When the probability is floored the gradients are zero and `clamped` is set.
std::pair<double, LossGradients> nnk_loss_backward(const ConstVectorRef& x, int true_class,
                                                   const CentreBank& bank,
                                                   std::span<const std::uint32_t> neighbours,
                                                   const KernelConfig& cfg);

}  // namespace nnk
