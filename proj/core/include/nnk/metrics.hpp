#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "nnk/types.hpp"

namespace nnk {

struct ClusterAssignment {
  std::vector<int> assignments; // one id in [0, cluster_count) per point
  int cluster_count = 0;
};

/// Lloyd's algorithm from k-means++ seeding, run to an assignment fixpoint or
/// 300 iterations. Empty clusters are reseeded to the point farthest from its
/// current centroid. Deterministic given the seed.
ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed);

/// Best-of-`restarts` kmeans by inertia, the clustering protocol used for NMI.
ClusterAssignment kmeans_best_of(const Matrix& points, int k, std::uint64_t seed, int restarts);

double kmeans_inertia(const Matrix& points, const ClusterAssignment& assignment);

/// Normalised mutual information: I(a;b) / ((H(a)+H(b))/2), natural log,
/// 0/0 -> 0. Symmetric and invariant under relabelling either argument.
double nmi(const std::vector<int>& a, const std::vector<int>& b);

/// Fraction of examples with at least one same-class hit among their true K
/// nearest (exact k-NN, self excluded), for each requested K.
std::map<int, double> recall_at_k(const Matrix& embeddings, const std::vector<int>& labels,
                                  const std::vector<int>& k_values);

/// Disjoint-class transfer split: classes sorted by id, the first
/// ceil(fraction * C) train, the rest are withheld for evaluation.
struct TransferSplit {
  std::vector<int> train_classes;
  std::vector<int> test_classes;
};
TransferSplit split_transfer(const std::vector<int>& labels, double fraction);

}  // namespace nnk
