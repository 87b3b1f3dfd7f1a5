#include "nnk/ann.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "nnk/rng.hpp"
#include "nnk/serialize.hpp"

namespace nnk {

namespace {

// Single source of truth for query-to-centre distances. Every search path
// (exact, graph, exhaustive fallback) uses this, so ordering is consistent
// down to the last ulp.
inline double squared_distance(const ConstVectorRef& query, const Matrix& centres,
                               std::uint32_t id) {
  return (query.transpose() - centres.row(id)).squaredNorm();
}

void validate_query(const ConstVectorRef& query, const Matrix& centres) {
  if (query.size() != centres.cols()) {
    throw std::invalid_argument("ann: query dimension does not match point set");
  }
  if (!query.allFinite()) {
    throw std::invalid_argument("ann: query contains a non-finite value");
  }
}

std::vector<Neighbour> top_k(std::vector<Neighbour>& scored, int k) {
  const auto by_distance_then_id = [](const Neighbour& a, const Neighbour& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  };
  const std::size_t take = std::min<std::size_t>(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), by_distance_then_id);
  scored.resize(take);
  return std::move(scored);
}

// Exact K nearest ids for every row of `points`, self excluded, computed in
// row blocks with the |a-b|^2 = |a|^2 + |b|^2 - 2ab expansion so the inner
// product block is a single GEMM. Returned ids are candidates only; callers
// re-derive exact distances directly.
std::vector<std::vector<std::uint32_t>> all_nodes_knn_ids(const Matrix& points, int K) {
  const int m = static_cast<int>(points.rows());
  const Vector norms = points.rowwise().squaredNorm();

  // Keep the scratch block around 64 MB.
  const int block = std::max(1, static_cast<int>(8'000'000 / std::max<std::int64_t>(1, m)));

  std::vector<std::vector<std::uint32_t>> result(m);
  std::vector<int> order(m);
  for (int q0 = 0; q0 < m; q0 += block) {
    const int rows = std::min(block, m - q0);
    Matrix dots = points.middleRows(q0, rows) * points.transpose();
    for (int r = 0; r < rows; ++r) {
      const int p = q0 + r;
      std::iota(order.begin(), order.end(), 0);
      const auto closer = [&](int a, int b) {
        const double da = norms[p] + norms[a] - 2.0 * dots(r, a);
        const double db = norms[p] + norms[b] - 2.0 * dots(r, b);
        return da != db ? da < db : a < b;
      };
      const int take = std::min(K + 1, m); // +1 so self can be dropped
      std::nth_element(order.begin(), order.begin() + take - 1, order.end(), closer);
      std::sort(order.begin(), order.begin() + take, closer);
      auto& ids = result[p];
      ids.reserve(K);
      for (int i = 0; i < take && static_cast<int>(ids.size()) < K; ++i) {
        if (order[i] != p) ids.push_back(static_cast<std::uint32_t>(order[i]));
      }
    }
  }
  return result;
}

}  // namespace

std::size_t GraphIndex::edge_count() const {
  std::size_t total = 0;
  for (const auto& edges : adjacency) total += edges.size();
  return total;
}

std::vector<Neighbour> brute_force_knn(const ConstVectorRef& query, const Matrix& centres,
                                       int k, std::optional<std::uint32_t> exclude) {
  validate_query(query, centres);
  const std::int64_t m = centres.rows();
  const std::int64_t available = m - (exclude && *exclude < m ? 1 : 0);
  if (k < 1 || k > available) {
    throw std::invalid_argument("brute_force_knn: k outside [1, available points]");
  }

  std::vector<Neighbour> scored;
  scored.reserve(m);
  for (std::uint32_t j = 0; j < m; ++j) {
    if (exclude && *exclude == j) continue;
    scored.emplace_back(j, squared_distance(query, centres, j));
  }
  return top_k(scored, k);
}

GraphIndex build_graph(const Matrix& centres, int max_degree) {
  const int m = static_cast<int>(centres.rows());
  if (m < 2) {
    throw std::invalid_argument("build_graph: need at least 2 points");
  }
  if (max_degree < 1) {
    throw std::invalid_argument("build_graph: max_degree must be >= 1");
  }
  if (!centres.allFinite()) {
    throw std::invalid_argument("build_graph: point set contains a non-finite value");
  }

  const int K = std::min(4 * max_degree, m - 1);
  const auto candidates = all_nodes_knn_ids(centres, K);

  GraphIndex index;
  index.max_degree = static_cast<std::uint32_t>(max_degree);
  index.adjacency.resize(m);

  std::vector<double> cand_dist(K);
  for (int p = 0; p < m; ++p) {
    const auto& cand = candidates[p];
    for (std::size_t i = 0; i < cand.size(); ++i) {
      cand_dist[i] = (centres.row(p) - centres.row(cand[i])).squaredNorm();
    }
    auto& kept = index.adjacency[p];
    kept.reserve(max_degree);
    for (std::size_t i = 0; i < cand.size() && kept.size() < static_cast<std::size_t>(max_degree); ++i) {
      const std::uint32_t r = cand[i];
      bool occluded = false;
      for (std::uint32_t q : kept) {
        if ((centres.row(q) - centres.row(r)).squaredNorm() < cand_dist[i]) {
          occluded = true;
          break;
        }
      }
      if (!occluded) kept.push_back(r);
    }
  }
  return index;
}

std::vector<Neighbour> search(const GraphIndex& index, const Matrix& centres,
                              const ConstVectorRef& query, const SearchParams& params,
                              std::optional<std::uint32_t> exclude) {
  const std::size_t n = index.node_count();
  if (n == 0) {
    throw std::invalid_argument("search: empty index");
  }
  if (static_cast<std::size_t>(centres.rows()) != n) {
    throw std::invalid_argument("search: index was built over a different point set");
  }
  if (params.k < 1 || params.backtrack_budget < params.k) {
    throw std::invalid_argument("search: need k >= 1 and backtrack_budget >= k");
  }
  validate_query(query, centres);

  std::vector<Neighbour> scored;

  // Full expansion degenerates to an exact linear scan.
  if (static_cast<std::size_t>(params.backtrack_budget) >= n) {
    scored.reserve(n);
    for (std::uint32_t j = 0; j < n; ++j) {
      if (exclude && *exclude == j) continue;
      scored.emplace_back(j, squared_distance(query, centres, j));
    }
    return top_k(scored, params.k);
  }

  std::vector<char> visited(n, 0);
  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;

  const auto visit = [&](std::uint32_t id) {
    if (visited[id]) return;
    visited[id] = 1;
    const double d = squared_distance(query, centres, id);
    frontier.emplace(d, id);
    if (!exclude || *exclude != id) scored.emplace_back(id, d);
  };

  visit(0);
  auto rng = make_rng(static_cast<std::uint64_t>(n), "ann-search-entries");
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
  for (int r = 0; r < params.restarts; ++r) visit(pick(rng));

  int expanded = 0;
  while (!frontier.empty() && expanded < params.backtrack_budget) {
    const auto [dist, node] = frontier.top();
    frontier.pop();
    ++expanded;
    for (std::uint32_t next : index.adjacency[node]) visit(next);
  }
  return top_k(scored, params.k);
}

void save_index(const GraphIndex& index, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("save_index: cannot open " + path.string());
  }
  io::write_magic(os, "NNKG");
  io::write_u16(os, 1);
  io::write_u64(os, index.node_count());
  io::write_u32(os, index.max_degree);
  for (const auto& edges : index.adjacency) {
    io::write_u32(os, static_cast<std::uint32_t>(edges.size()));
    for (std::uint32_t id : edges) io::write_u32(os, id);
  }
  if (!os) {
    throw std::runtime_error("save_index: write failed for " + path.string());
  }
}

GraphIndex load_index(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("load_index: cannot open " + path.string());
  }
  io::expect_magic(is, "NNKG", "NNKG");
  const std::uint16_t version = io::read_u16(is, "NNKG version");
  if (version != 1) {
    io::fail(is, "NNKG: unsupported version " + std::to_string(version));
  }
  const std::uint64_t nodes = io::read_u64(is, "NNKG node count");
  GraphIndex index;
  index.max_degree = io::read_u32(is, "NNKG max degree");
  index.adjacency.resize(nodes);
  for (std::uint64_t p = 0; p < nodes; ++p) {
    const std::uint32_t count = io::read_u32(is, "NNKG edge count");
    if (count > index.max_degree) {
      io::fail(is, "NNKG: node out-degree exceeds max_degree");
    }
    auto& edges = index.adjacency[p];
    edges.resize(count);
    for (std::uint32_t& id : edges) {
      id = io::read_u32(is, "NNKG edge id");
      if (id >= nodes || id == p) {
        io::fail(is, "NNKG: invalid edge target");
      }
    }
  }
  return index;
}

CentreIndex::CentreIndex(const Matrix& centres, const AnnOptions& options)
    : centres_(&centres), options_(options) {
  if (static_cast<std::size_t>(centres.rows()) > options.exact_threshold) {
    graph_ = build_graph(centres, options.max_degree);
  }
}

std::vector<Neighbour> CentreIndex::knn(const ConstVectorRef& query, int k,
                                        std::optional<std::uint32_t> exclude) const {
  if (centres_ == nullptr) {
    throw std::logic_error("CentreIndex: not initialised");
  }
  if (!graph_) {
    return brute_force_knn(query, *centres_, k, exclude);
  }
  SearchParams params;
  params.k = k;
  params.backtrack_budget = std::max(options_.backtrack_budget, k);
  params.restarts = options_.restarts;
  return search(*graph_, *centres_, query, params, exclude);
}

}  // namespace nnk
