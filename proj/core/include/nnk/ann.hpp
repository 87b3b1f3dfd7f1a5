#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "nnk/types.hpp"

namespace nnk {

// (centre id, squared distance), the unit of every k-NN result in this module.
using Neighbour = std::pair<std::uint32_t, double>;

/// Occlusion-pruned directed k-NN graph over a fixed point set. Immutable once
/// built; concurrent searches are safe.
struct GraphIndex {
  std::vector<std::vector<std::uint32_t>> adjacency; // out-edges, sorted by distance
  std::uint32_t max_degree = 0;

  std::size_t node_count() const { return adjacency.size(); }
  std::size_t edge_count() const;
};

struct SearchParams {
  int k = 100;                 // neighbours requested
  int backtrack_budget = 2000; // max vertices expanded before giving up
  int restarts = 3;            // extra seeded entry points besides node 0
};

/// Exact k nearest centres by squared Euclidean distance, ascending, ties to
/// the lower id. `exclude` is never returned. Also the test oracle for the
/// graph search.
std::vector<Neighbour> brute_force_knn(const ConstVectorRef& query, const Matrix& centres,
                                       int k, std::optional<std::uint32_t> exclude = {});

/// Build the graph: each node's candidate edges are its exact 4*max_degree
/// nearest neighbours; a candidate r is kept only if no already-kept edge q
/// occludes it (dist(q, r) < dist(p, r)); kept edges are capped at max_degree.
/// Deterministic given the input matrix.
GraphIndex build_graph(const Matrix& centres, int max_degree);

/// Greedy best-first traversal with backtracking from node 0 plus `restarts`
/// seeded entry points. Every scored vertex is a result candidate; expansion
/// stops when the budget is spent. A budget covering every vertex degenerates
/// to a linear scan over the whole point set, making the result exact.
std::vector<Neighbour> search(const GraphIndex& index, const Matrix& centres,
                              const ConstVectorRef& query, const SearchParams& params,
                              std::optional<std::uint32_t> exclude = {});

// NNKG index persistence (little-endian).
void save_index(const GraphIndex& index, const std::filesystem::path& path);
GraphIndex load_index(const std::filesystem::path& path);

/// Policy wrapper used by the centre bank: exact scan for small banks, graph
/// search above `exact_threshold` points.
struct AnnOptions {
  int max_degree = 20;
  int backtrack_budget = 2000;
  int restarts = 3;
  std::size_t exact_threshold = 2000;
};

class CentreIndex {
 public:
  CentreIndex() = default;
  CentreIndex(const Matrix& centres, const AnnOptions& options);

  std::vector<Neighbour> knn(const ConstVectorRef& query, int k,
                             std::optional<std::uint32_t> exclude = {}) const;

  bool uses_graph() const { return graph_.has_value(); }
  const GraphIndex* graph() const { return graph_ ? &*graph_ : nullptr; }

 private:
  const Matrix* centres_ = nullptr; // non-owning; caller keeps the matrix alive
  AnnOptions options_;
  std::optional<GraphIndex> graph_;
};

}  // namespace nnk
