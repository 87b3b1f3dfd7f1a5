#include "nnk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "nnk/rng.hpp"

namespace nnk {

namespace {

int assign_point(const Matrix& points, const Matrix& centroids, int i) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int c = 0; c < centroids.rows(); ++c) {
    const double d = (points.row(i) - centroids.row(c)).squaredNorm();
    if (d < best_dist) {
      best_dist = d;
      best = c;
    }
  }
  return best;
}

Matrix kmeanspp_seed(const Matrix& points, int k, std::mt19937_64& rng) {
  const int n = static_cast<int>(points.rows());
  Matrix centroids(k, points.cols());
  std::vector<char> chosen(n, 0);

  std::uniform_int_distribution<int> first(0, n - 1);
  int pick = first(rng);
  centroids.row(0) = points.row(pick);
  chosen[pick] = 1;

  Vector dist_sq(n);
  for (int i = 0; i < n; ++i) {
    dist_sq[i] = (points.row(i) - centroids.row(0)).squaredNorm();
  }
  for (int c = 1; c < k; ++c) {
    const double total = dist_sq.sum();
    int next = -1;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (int i = 0; i < n; ++i) {
        target -= dist_sq[i];
        if (target <= 0.0) {
          next = i;
          break;
        }
      }
      if (next < 0) next = n - 1;
    }
    if (next < 0 || chosen[next]) {
      // All remaining mass is on duplicates; take the lowest unchosen point.
      next = 0;
      while (next < n && chosen[next]) ++next;
      if (next == n) next = 0;
    }
    centroids.row(c) = points.row(next);
    chosen[next] = 1;
    for (int i = 0; i < n; ++i) {
      dist_sq[i] = std::min(dist_sq[i], (points.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed) {
  const int n = static_cast<int>(points.rows());
  if (k < 1 || k > n) {
    throw std::invalid_argument("kmeans: k outside [1, n]");
  }
  auto rng = make_rng(seed, "kmeans");
  Matrix centroids = kmeanspp_seed(points, k, rng);

  ClusterAssignment result;
  result.cluster_count = k;
  result.assignments.assign(n, -1);

  std::vector<int> counts(k, 0);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      const int c = assign_point(points, centroids, i);
      if (c != result.assignments[i]) changed = true;
      result.assignments[i] = c;
      ++counts[c];
    }

    // Reseed empty clusters at the point farthest from its centroid.
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      int farthest = -1;
      double far_dist = -1.0;
      for (int i = 0; i < n; ++i) {
        if (counts[result.assignments[i]] <= 1) continue; // do not empty another cluster
        const double d = (points.row(i) - centroids.row(result.assignments[i])).squaredNorm();
        if (d > far_dist) {
          far_dist = d;
          farthest = i;
        }
      }
      if (farthest >= 0) {
        --counts[result.assignments[farthest]];
        result.assignments[farthest] = c;
        ++counts[c];
        centroids.row(c) = points.row(farthest);
        reseeded = true;
      }
    }

    if (!changed && !reseeded && iter > 0) break;

    centroids.setZero();
    for (int i = 0; i < n; ++i) {
      centroids.row(result.assignments[i]) += points.row(i);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) centroids.row(c) /= counts[c];
    }
  }
  return result;
}

ClusterAssignment kmeans_best_of(const Matrix& points, int k, std::uint64_t seed, int restarts) {
  if (restarts < 1) throw std::invalid_argument("kmeans_best_of: restarts must be >= 1");
  ClusterAssignment best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    ClusterAssignment candidate = kmeans(points, k, substream_seed(seed, "restart-" + std::to_string(r)));
    const double inertia = kmeans_inertia(points, candidate);
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = std::move(candidate);
    }
  }
  return best;
}

double kmeans_inertia(const Matrix& points, const ClusterAssignment& assignment) {
  const int n = static_cast<int>(points.rows());
  if (static_cast<int>(assignment.assignments.size()) != n) {
    throw std::invalid_argument("kmeans_inertia: assignment length mismatch");
  }
  Matrix centroids = Matrix::Zero(assignment.cluster_count, points.cols());
  std::vector<int> counts(assignment.cluster_count, 0);
  for (int i = 0; i < n; ++i) {
    centroids.row(assignment.assignments[i]) += points.row(i);
    ++counts[assignment.assignments[i]];
  }
  for (int c = 0; c < assignment.cluster_count; ++c) {
    if (counts[c] > 0) centroids.row(c) /= counts[c];
  }
  double inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    inertia += (points.row(i) - centroids.row(assignment.assignments[i])).squaredNorm();
  }
  return inertia;
}

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("nmi: input lengths differ");
  }
  const double n = static_cast<double>(a.size());
  if (a.empty()) return 0.0;

  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<double> joint(static_cast<std::size_t>(ka) * kb, 0.0);
  std::vector<double> ma(ka, 0.0), mb(kb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || b[i] < 0) throw std::invalid_argument("nmi: negative id");
    joint[static_cast<std::size_t>(a[i]) * kb + b[i]] += 1.0;
    ma[a[i]] += 1.0;
    mb[b[i]] += 1.0;
  }

  double info = 0.0;
  for (int i = 0; i < ka; ++i) {
    for (int j = 0; j < kb; ++j) {
      const double nij = joint[static_cast<std::size_t>(i) * kb + j];
      if (nij > 0.0) {
        info += (nij / n) * std::log(n * nij / (ma[i] * mb[j]));
      }
    }
  }
  const auto entropy = [n](const std::vector<double>& counts) {
    double h = 0.0;
    for (double c : counts) {
      if (c > 0.0) h -= (c / n) * std::log(c / n);
    }
    return h;
  };
  const double denom = 0.5 * (entropy(ma) + entropy(mb));
  if (denom == 0.0 || info <= 0.0) return 0.0;
  return std::min(info / denom, 1.0);
}

std::map<int, double> recall_at_k(const Matrix& embeddings, const std::vector<int>& labels,
                                  const std::vector<int>& k_values) {
  const int n = static_cast<int>(embeddings.rows());
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("recall_at_k: label count mismatch");
  }
  if (k_values.empty()) {
    throw std::invalid_argument("recall_at_k: no k values");
  }
  int k_max = 0;
  for (int k : k_values) {
    if (k < 1 || k >= n) {
      throw std::invalid_argument("recall_at_k: k must lie in [1, n)");
    }
    k_max = std::max(k_max, k);
  }

  // hits[r] = how many examples have their first same-class neighbour at rank r.
  std::vector<int> first_hit_counts(k_max + 1, 0);
  std::vector<int> order;
  std::vector<double> dist(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      dist[j] = (embeddings.row(i) - embeddings.row(j)).squaredNorm();
    }
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    order.erase(order.begin() + i); // self excluded
    const auto closer = [&](int x, int y) {
      return dist[x] != dist[y] ? dist[x] < dist[y] : x < y;
    };
    std::partial_sort(order.begin(), order.begin() + k_max, order.end(), closer);
    for (int r = 0; r < k_max; ++r) {
      if (labels[order[r]] == labels[i]) {
        ++first_hit_counts[r + 1];
        break;
      }
    }
  }

  std::map<int, double> recall;
  int cumulative = 0;
  int rank = 0;
  std::vector<int> sorted_k(k_values.begin(), k_values.end());
  std::sort(sorted_k.begin(), sorted_k.end());
  for (int k : sorted_k) {
    while (rank < k) cumulative += first_hit_counts[++rank];
    recall[k] = static_cast<double>(cumulative) / n;
  }
  return recall;
}

TransferSplit split_transfer(const std::vector<int>& labels, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split_transfer: fraction must lie in (0, 1)");
  }
  if (labels.empty()) {
    throw std::invalid_argument("split_transfer: empty label list");
  }
  const int C = *std::max_element(labels.begin(), labels.end()) + 1;
  if (C < 2) {
    throw std::invalid_argument("split_transfer: need at least 2 classes");
  }
  const int train_count = static_cast<int>(std::ceil(fraction * C));
  TransferSplit split;
  for (int c = 0; c < C; ++c) {
    (c < train_count ? split.train_classes : split.test_classes).push_back(c);
  }
  return split;
}

}  // namespace nnk
