#pragma once

// Independent reference implementations used to check the library. Everything
// here is deliberately written the naive way (direct summation, full sorts,
// finite differences) and shares no code with the implementation under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "nnk/kernel.hpp"
#include "nnk/types.hpp"

namespace oracle {

// Direct evaluation of the weighted-kernel class posterior by naive
// summation over the given centre subset. No log-space tricks.
inline nnk::Vector direct_class_posterior(const nnk::Vector& x, const nnk::Matrix& centres,
                                          const std::vector<int>& labels,
                                          const nnk::Vector& weights, int num_classes,
                                          double sigma,
                                          const std::vector<std::uint32_t>& subset) {
  nnk::Vector per_class = nnk::Vector::Zero(num_classes);
  double total = 0.0;
  for (std::uint32_t j : subset) {
    const double sq = (x.transpose() - centres.row(j)).squaredNorm();
    const double f = std::exp(-sq / (2.0 * sigma * sigma));
    per_class[labels[j]] += weights[j] * f;
    total += weights[j] * f;
  }
  return per_class / total;
}

inline nnk::Vector direct_full_posterior(const nnk::Vector& x, const nnk::CentreBank& bank,
                                         double sigma) {
  std::vector<std::uint32_t> all(bank.size());
  std::iota(all.begin(), all.end(), 0);
  return direct_class_posterior(x, bank.centres, bank.labels, bank.weights, bank.num_classes,
                                sigma, all);
}

// Independently coded exact k-NN: plain O(m d) distance scan plus a full
// sort of every (distance, id) pair.
inline std::vector<std::pair<std::uint32_t, double>> naive_knn(
    const nnk::Vector& query, const nnk::Matrix& centres, int k,
    std::optional<std::uint32_t> exclude = {}) {
  std::vector<std::pair<double, std::uint32_t>> scored;
  for (std::uint32_t j = 0; j < centres.rows(); ++j) {
    if (exclude && *exclude == j) continue;
    double sq = 0.0;
    for (Eigen::Index c = 0; c < centres.cols(); ++c) {
      const double diff = query[c] - centres(j, c);
      sq += diff * diff;
    }
    scored.emplace_back(sq, j);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::pair<std::uint32_t, double>> result;
  for (int i = 0; i < k && i < static_cast<int>(scored.size()); ++i) {
    result.emplace_back(scored[i].second, scored[i].first);
  }
  return result;
}

// Central finite difference of a scalar function at x, one coordinate at a
// time.
inline nnk::Vector central_difference(const std::function<double(const nnk::Vector&)>& f,
                                      const nnk::Vector& x, double step = 1e-4) {
  nnk::Vector grad(x.size());
  nnk::Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + step;
    const double plus = f(probe);
    probe[i] = original - step;
    const double minus = f(probe);
    probe[i] = original;
    grad[i] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

inline double central_difference_1d(const std::function<double(double)>& f, double x,
                                    double step = 1e-4) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

// Gradient-check agreement: |a - b| <= tol * max(1, |a|, |b|).
inline bool grad_close(double analytic, double numeric, double tol = 1e-4) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) <= tol * scale;
}

inline bool grad_close(const nnk::Vector& analytic, const nnk::Vector& numeric,
                       double tol = 1e-4) {
  if (analytic.size() != numeric.size()) return false;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    if (!grad_close(analytic[i], numeric[i], tol)) return false;
  }
  return true;
}

// Fraction of `expected` ids present in `got` (recall of a result list).
inline double id_recall(const std::vector<std::pair<std::uint32_t, double>>& got,
                        const std::vector<std::pair<std::uint32_t, double>>& expected) {
  std::vector<std::uint32_t> have;
  for (const auto& [id, dist] : got) have.push_back(id);
  int hits = 0;
  for (const auto& [id, dist] : expected) {
    if (std::find(have.begin(), have.end(), id) != have.end()) ++hits;
  }
  return expected.empty() ? 1.0 : static_cast<double>(hits) / expected.size();
}

}  // namespace oracle
