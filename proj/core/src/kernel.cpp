#include "nnk/kernel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nnk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_finite(const ConstVectorRef& v, const char* what) {
  if (!v.allFinite()) {
    throw std::invalid_argument(std::string(what) + " contains a non-finite value");
  }
}

}  // namespace

void KernelConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("KernelConfig: sigma must be positive and finite");
  }
  if (!(epsilon_floor > 0.0) || !(epsilon_floor < 1e-6)) {
    throw std::invalid_argument("KernelConfig: epsilon_floor must lie in (0, 1e-6)");
  }
}

void CentreBank::validate() const {
  const int m = size();
  if (static_cast<int>(labels.size()) != m || weights.size() != m) {
    throw std::invalid_argument("CentreBank: centres, labels and weights sizes disagree");
  }
  if (num_classes <= 0) {
    throw std::invalid_argument("CentreBank: num_classes must be positive");
  }
  std::vector<char> seen(num_classes, 0);
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("CentreBank: label outside [0, num_classes)");
    }
    seen[label] = 1;
  }
  for (int q = 0; q < num_classes; ++q) {
    if (!seen[q]) {
      throw std::invalid_argument("CentreBank: class " + std::to_string(q) + " has no centre");
    }
  }
  for (int i = 0; i < m; ++i) {
    if (!(weights[i] > 0.0)) {
      throw std::invalid_argument("CentreBank: weights must be strictly positive");
    }
  }
}

int ClassDistribution::argmax() const {
  int best = 0;
  for (int q = 1; q < probs.size(); ++q) {
    if (probs[q] > probs[best]) best = q;
  }
  return best;
}

double kernel_value(const ConstVectorRef& x, const ConstVectorRef& c, double sigma) {
  if (x.size() != c.size()) {
    throw std::invalid_argument("kernel_value: dimension mismatch");
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("kernel_value: sigma must be positive");
  }
  check_finite(x, "kernel_value: x");
  check_finite(c, "kernel_value: c");
  const double sq = (x - c).squaredNorm();
  return std::exp(-sq / (2.0 * sigma * sigma));
}

KernelSums log_kernel_sums(const ConstVectorRef& x, const CentreBank& bank,
                           std::span<const std::uint32_t> neighbours,
                           const KernelConfig& cfg) {
  cfg.validate();
  if (neighbours.empty()) {
    throw std::invalid_argument("log_kernel_sums: empty neighbour list");
  }
  if (x.size() != bank.dim()) {
    throw std::invalid_argument("log_kernel_sums: query dimension does not match bank");
  }
  check_finite(x, "log_kernel_sums: x");

  const double inv_two_sigma_sq = 1.0 / (2.0 * cfg.sigma * cfg.sigma);

  // Exponent arguments t_j = ||x - c_j||^2 / (2 sigma^2), shifted by their
  // minimum so the largest term exponentiates to exactly 1.
  std::vector<double> t(neighbours.size());
  double t_min = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < neighbours.size(); ++n) {
    const std::uint32_t j = neighbours[n];
    if (j >= static_cast<std::uint32_t>(bank.size())) {
      throw std::invalid_argument("log_kernel_sums: neighbour id outside bank");
    }
    t[n] = (x.transpose() - bank.centres.row(j)).squaredNorm() * inv_two_sigma_sq;
    t_min = std::min(t_min, t[n]);
  }

  double total = 0.0;
  Vector per_class = Vector::Zero(bank.num_classes);
  for (std::size_t n = 0; n < neighbours.size(); ++n) {
    const std::uint32_t j = neighbours[n];
    const double term = bank.weights[j] * std::exp(-(t[n] - t_min));
    total += term;
    per_class[bank.labels[j]] += term;
  }

  KernelSums sums;
  sums.log_sum = std::log(total) - t_min;
  sums.log_per_class = Vector::Constant(bank.num_classes, kNegInf);
  for (int q = 0; q < bank.num_classes; ++q) {
    if (per_class[q] > 0.0) {
      sums.log_per_class[q] = std::log(per_class[q]) - t_min;
    }
  }
  return sums;
}

ClassDistribution classify(const ConstVectorRef& x, const CentreBank& bank,
                           std::span<const std::uint32_t> neighbours,
                           const KernelConfig& cfg) {
  const KernelSums sums = log_kernel_sums(x, bank, neighbours, cfg);
  ClassDistribution dist;
  dist.probs = Vector::Zero(bank.num_classes);
  for (int q = 0; q < bank.num_classes; ++q) {
    if (sums.log_per_class[q] != kNegInf) {
      dist.probs[q] = std::exp(sums.log_per_class[q] - sums.log_sum);
    }
  }
  return dist;
}

double nnk_loss(const ConstVectorRef& x, int true_class, const CentreBank& bank,
                std::span<const std::uint32_t> neighbours, const KernelConfig& cfg) {
  if (true_class < 0 || true_class >= bank.num_classes) {
    throw std::invalid_argument("nnk_loss: true_class outside [0, num_classes)");
  }
  const KernelSums sums = log_kernel_sums(x, bank, neighbours, cfg);
  const double raw = sums.log_sum - sums.log_per_class[true_class]; // -ln Pr, may be +inf
  return std::min(raw, -std::log(cfg.epsilon_floor));
}

std::pair<double, LossGradients> nnk_loss_backward(const ConstVectorRef& x, int true_class,
                                                   const CentreBank& bank,
                                                   std::span<const std::uint32_t> neighbours,
                                                   const KernelConfig& cfg) {
  if (true_class < 0 || true_class >= bank.num_classes) {
    throw std::invalid_argument("nnk_loss_backward: true_class outside [0, num_classes)");
  }
  cfg.validate();
  if (neighbours.empty()) {
    throw std::invalid_argument("nnk_loss_backward: empty neighbour list");
  }
  if (x.size() != bank.dim()) {
    throw std::invalid_argument("nnk_loss_backward: query dimension does not match bank");
  }
  check_finite(x, "nnk_loss_backward: x");

  const double sigma_sq = cfg.sigma * cfg.sigma;
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma_sq);

  std::vector<double> t(neighbours.size());
  double t_min = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < neighbours.size(); ++n) {
    const std::uint32_t j = neighbours[n];
    if (j >= static_cast<std::uint32_t>(bank.size())) {
      throw std::invalid_argument("nnk_loss_backward: neighbour id outside bank");
    }
    t[n] = (x.transpose() - bank.centres.row(j)).squaredNorm() * inv_two_sigma_sq;
    t_min = std::min(t_min, t[n]);
  }

  // e_j = w_j f_j up to the common factor exp(-t_min), which cancels in every
  // ratio below.
  std::vector<double> e(neighbours.size());
  double total = 0.0;
  double total_true = 0.0;
  for (std::size_t n = 0; n < neighbours.size(); ++n) {
    const std::uint32_t j = neighbours[n];
    e[n] = bank.weights[j] * std::exp(-(t[n] - t_min));
    total += e[n];
    if (bank.labels[j] == true_class) total_true += e[n];
  }

  LossGradients grads;
  grads.d_embedding = Vector::Zero(x.size());
  grads.d_weights.reserve(neighbours.size());

  const double floor_loss = -std::log(cfg.epsilon_floor);
  const double prob = total_true / total;
  if (!(prob > cfg.epsilon_floor)) {
    // Degenerate neighbourhood: loss pinned at the floor, no gradient signal.
    for (std::uint32_t j : neighbours) grads.d_weights.emplace_back(static_cast<int>(j), 0.0);
    grads.clamped = true;
    return {floor_loss, std::move(grads)};
  }

  const double loss = std::log(total) - std::log(total_true);
  for (std::size_t n = 0; n < neighbours.size(); ++n) {
    const std::uint32_t j = neighbours[n];
    const double p = e[n] / total;
    const double q = bank.labels[j] == true_class ? e[n] / total_true : 0.0;
    grads.d_embedding.noalias() +=
        (p - q) * (bank.centres.row(j).transpose() - x) / sigma_sq;
    grads.d_weights.emplace_back(static_cast<int>(j), (p - q) / bank.weights[j]);
  }
  return {loss, std::move(grads)};
}

}  // namespace nnk
