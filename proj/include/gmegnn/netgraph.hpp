#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmegnn/errors.hpp"
#include "gmegnn/rng.hpp"

namespace gmegnn {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

inline constexpr int kUnreachable = -1;

/*
 * Undirected simple graph over dense node ids 0..n-1. Adjacency lists are
 * sorted, so neighbor iteration order (and everything downstream of it) is
 * deterministic. Immutable once built.
 */
class Graph {
 public:
  Graph() = default;
  explicit Graph(std::size_t n) : adj_(n) {}

  // Rejects self-loops, out-of-range ids and duplicate (or reversed) pairs.
  static Graph from_edges(std::size_t n, std::span<const Edge> edges) {
    Graph g(n);
    for (const auto& [a, b] : edges) {
      if (a >= n || b >= n) {
        throw IndexError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                         ") out of range for " + std::to_string(n) + " nodes");
      }
      if (a == b) throw ParameterError("self-loop at node " + std::to_string(a));
      g.adj_[a].push_back(b);
      g.adj_[b].push_back(a);
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto& nb = g.adj_[i];
      std::sort(nb.begin(), nb.end());
      if (std::adjacent_find(nb.begin(), nb.end()) != nb.end()) {
        throw ParameterError("duplicate edge at node " + std::to_string(i));
      }
    }
    g.n_edges_ = edges.size();
    return g;
  }

  std::size_t n_nodes() const { return adj_.size(); }
  std::size_t n_edges() const { return n_edges_; }

  std::span<const NodeId> neighbors(NodeId i) const {
    check(i);
    return adj_[i];
  }
  std::size_t degree(NodeId i) const { return neighbors(i).size(); }

  // A_ij in {0,1}; A_ii = 0.
  int adjacency(NodeId i, NodeId j) const {
    check(j);
    auto nb = neighbors(i);
    return std::binary_search(nb.begin(), nb.end(), j) ? 1 : 0;
  }

  // Each undirected edge once, as (i, j) with i < j, in lexicographic order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(n_edges_);
    for (NodeId i = 0; i < adj_.size(); ++i) {
      for (NodeId j : adj_[i]) {
        if (i < j) out.emplace_back(i, j);
      }
    }
    return out;
  }

 private:
  void check(NodeId i) const {
    if (i >= adj_.size()) {
      throw IndexError("node " + std::to_string(i) + " out of range for " +
                       std::to_string(adj_.size()) + " nodes");
    }
  }

  std::vector<std::vector<NodeId>> adj_;
  std::size_t n_edges_ = 0;
};

/*
 * Watts-Strogatz small world graph. Starts from a ring lattice where each
 * node links to its k/2 clockwise neighbors, then scans lattice edges
 * (offset-major, as in the classical construction) and with probability p
 * moves the far endpoint to a uniformly drawn node that is neither the
 * source nor already adjacent to it. The edge count n*k/2 is preserved.
 */
inline Graph ws_generate(std::size_t n, std::size_t k, double p,
                         std::uint64_t seed) {
  if (k < 2 || k % 2 != 0 || n <= k) {
    throw ParameterError("ws_generate requires n > k >= 2 with k even (n=" +
                         std::to_string(n) + ", k=" + std::to_string(k) + ")");
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ParameterError("ws_generate requires 0 <= p <= 1");
  }
  std::vector<std::set<NodeId>> nb(n);
  for (NodeId u = 0; u < n; ++u) {
    for (std::size_t j = 1; j <= k / 2; ++j) {
      NodeId v = static_cast<NodeId>((u + j) % n);
      nb[u].insert(v);
      nb[v].insert(u);
    }
  }
  if (p > 0.0) {
    Rng rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
    for (std::size_t j = 1; j <= k / 2; ++j) {
      for (NodeId u = 0; u < n; ++u) {
        NodeId v = static_cast<NodeId>((u + j) % n);
        if (coin(rng) >= p) continue;
        if (!nb[u].contains(v)) continue;  // already rewired away
        if (nb[u].size() >= n - 1) continue;
        NodeId w = pick(rng);
        while (w == u || nb[u].contains(w)) w = pick(rng);
        nb[u].erase(v);
        nb[v].erase(u);
        nb[u].insert(w);
        nb[w].insert(u);
      }
    }
  }
  std::vector<Edge> edges;
  edges.reserve(n * k / 2);
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v : nb[u]) {
      if (u < v) edges.emplace_back(u, v);
    }
  }
  return Graph::from_edges(n, edges);
}

// Reusable BFS state; one per thread.
class BfsWorkspace {
 public:
  void reset(std::size_t n) {
    if (dist_.size() != n) {
      dist_.assign(n, kUnreachable);
    } else {
      for (NodeId v : touched_) dist_[v] = kUnreachable;
    }
    touched_.clear();
  }

 private:
  template <class Visit>
  friend void bfs_ball(const Graph&, NodeId, int, BfsWorkspace&, Visit&&);

  std::vector<int> dist_;
  std::vector<NodeId> touched_;  // doubles as the FIFO queue
};

// Calls visit(node, distance) for every node within `radius` hops of source
// (radius < 0 means unbounded), in BFS order.
template <class Visit>
void bfs_ball(const Graph& g, NodeId source, int radius, BfsWorkspace& ws,
              Visit&& visit) {
  if (source >= g.n_nodes()) {
    throw IndexError("bfs source " + std::to_string(source) + " out of range");
  }
  ws.reset(g.n_nodes());
  ws.dist_[source] = 0;
  ws.touched_.push_back(source);
  for (std::size_t head = 0; head < ws.touched_.size(); ++head) {
    NodeId u = ws.touched_[head];
    int du = ws.dist_[u];
    visit(u, du);
    if (radius >= 0 && du >= radius) continue;
    for (NodeId v : g.neighbors(u)) {
      if (ws.dist_[v] == kUnreachable) {
        ws.dist_[v] = du + 1;
        ws.touched_.push_back(v);
      }
    }
  }
}

// Hop distances from source; kUnreachable for nodes outside the cap or the
// source's component.
inline std::vector<int> bfs_distances(const Graph& g, NodeId source,
                                      std::optional<int> cap = std::nullopt) {
  std::vector<int> dist(g.n_nodes(), kUnreachable);
  BfsWorkspace ws;
  bfs_ball(g, source, cap.value_or(-1), ws,
           [&](NodeId v, int d) { dist[v] = d; });
  return dist;
}

// s-th order neighborhood {j : l(i,j) <= s}, sorted.
inline std::vector<NodeId> neighborhood(const Graph& g, NodeId i, int s) {
  if (s < 0) throw ParameterError("neighborhood radius must be >= 0");
  std::vector<NodeId> out;
  BfsWorkspace ws;
  bfs_ball(g, i, s, ws, [&](NodeId v, int) { out.push_back(v); });
  std::sort(out.begin(), out.end());
  return out;
}

struct GraphStats {
  double avg_degree = 0.0;
  // Mean shortest-path length over connected ordered pairs; empty when the
  // graph has no connected pair.
  std::optional<double> avg_path_length;
  std::size_t n_components = 0;
};

inline GraphStats graph_stats(const Graph& g) {
  const std::size_t n = g.n_nodes();
  if (n == 0) throw ParameterError("graph_stats requires at least one node");
  GraphStats st;
  st.avg_degree = 2.0 * static_cast<double>(g.n_edges()) / static_cast<double>(n);

  BfsWorkspace ws;
  double total = 0.0;
  std::size_t pairs = 0;
  for (NodeId s = 0; s < n; ++s) {
    bfs_ball(g, s, -1, ws, [&](NodeId, int d) {
      if (d > 0) {
        total += d;
        ++pairs;
      }
    });
  }
  if (pairs > 0) st.avg_path_length = total / static_cast<double>(pairs);

  std::vector<char> seen(n, 0);
  for (NodeId s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++st.n_components;
    bfs_ball(g, s, -1, ws, [&](NodeId v, int) { seen[v] = 1; });
  }
  return st;
}

}  // namespace gmegnn
