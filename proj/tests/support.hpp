#pragma once

// Test fixtures and independent reference implementations. Nothing here
// calls into the library routine it is used to check.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmegnn/balance.hpp"
#include "gmegnn/netgraph.hpp"

namespace testsupport {

using gmegnn::Edge;
using gmegnn::Graph;
using gmegnn::GroupData;
using gmegnn::GroupedPopulation;
using gmegnn::NodeId;

inline Graph path_graph(std::size_t n) {
  std::vector<Edge> e;
  for (NodeId i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph::from_edges(n, e);
}

inline Graph complete_graph(std::size_t n) {
  std::vector<Edge> e;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return Graph::from_edges(n, e);
}

inline Graph star_graph(std::size_t leaves) {
  std::vector<Edge> e;
  for (NodeId j = 1; j <= leaves; ++j) e.emplace_back(0, j);
  return Graph::from_edges(leaves + 1, e);
}

inline Graph random_graph(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> e;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (coin(rng)) e.emplace_back(i, j);
  return Graph::from_edges(n, e);
}

// Dense 0/1 adjacency built from the edge list.
inline Eigen::MatrixXi dense_adjacency(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
  for (const auto& [i, j] : g.edges()) {
    a(i, j) = 1;
    a(j, i) = 1;
  }
  return a;
}

inline constexpr int kInf = std::numeric_limits<int>::max() / 4;

// Floyd-Warshall all-pairs hop distances; kInf for disconnected pairs.
inline Eigen::MatrixXi all_pairs_distances(const Graph& g) {
  const auto a = dense_adjacency(g);
  const auto n = a.rows();
  Eigen::MatrixXi d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = i == j ? 0 : (a(i, j) ? 1 : kInf);
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (d(i, k) + d(k, j) < d(i, j)) d(i, j) = d(i, k) + d(k, j);
  return d;
}

inline GroupData random_group(std::size_t n, std::size_t d, double edge_p, std::mt19937_64& rng,
                              std::string id = "g") {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  GroupData g;
  g.group_id = std::move(id);
  g.graph = random_graph(n, edge_p, rng);
  g.W.resize(n);
  for (auto& w : g.W) w = coin(rng) ? 1 : 0;
  g.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < g.X.size(); ++i) g.X.data()[i] = gauss(rng);
  g.Y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < g.Y.size(); ++i) g.Y(i) = gauss(rng);
  return g;
}

inline GroupedPopulation random_population(std::size_t M, std::size_t n_min, std::size_t n_max,
                                           std::size_t d, double edge_p, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> sz(n_min, n_max);
  GroupedPopulation pop;
  for (std::size_t g = 0; g < M; ++g)
    pop.groups.push_back(random_group(sz(rng), d, edge_p, rng, "grp" + std::to_string(g)));
  return pop;
}

// Relabels nodes: new id of old node i is perm[i].
inline GroupData permute_group(const GroupData& g, const std::vector<NodeId>& perm) {
  GroupData out;
  out.group_id = g.group_id;
  std::vector<Edge> e;
  for (const auto& [i, j] : g.graph.edges()) e.emplace_back(perm[i], perm[j]);
  out.graph = Graph::from_edges(g.size(), e);
  out.W.resize(g.size());
  out.X.resize(g.X.rows(), g.X.cols());
  out.Y.resize(g.Y.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.W[perm[i]] = g.W[i];
    out.X.row(perm[i]) = g.X.row(static_cast<Eigen::Index>(i));
    out.Y(perm[i]) = g.Y(static_cast<Eigen::Index>(i));
  }
  return out;
}

inline std::vector<NodeId> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<NodeId> p(n);
  for (NodeId i = 0; i < n; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Balancing statistic by explicit double loop over the dense adjacency.
inline Eigen::VectorXd brute_force_statistic(const GroupData& g) {
  const auto a = dense_adjacency(g.graph);
  const auto n = static_cast<Eigen::Index>(g.size());
  const auto d = g.X.cols();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2 + 2 * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    s(0) += g.W[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < d; ++k) s(1 + k) += g.X(i, k);
    for (Eigen::Index j = 0; j < n; ++j) {
      s(1 + d) += a(i, j) * g.W[static_cast<std::size_t>(j)];
      for (Eigen::Index k = 0; k < d; ++k) s(2 + d + k) += a(i, j) * g.X(j, k);
    }
  }
  return s / static_cast<double>(n);
}

// HAC sum from Floyd-Warshall distances and a full double loop.
inline double brute_force_hac(const GroupedPopulation& pop, const std::vector<Eigen::VectorXd>& eff,
                              double tau, const std::vector<std::vector<std::uint8_t>>& flags,
                              const std::vector<int>& b) {
  double total = 0;
  for (std::size_t g = 0; g < pop.n_groups(); ++g) {
    const auto d = all_pairs_distances(pop.groups[g].graph);
    const auto n = static_cast<Eigen::Index>(pop.groups[g].size());
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (d(i, j) > b[g]) continue;
        const double ei = flags[g][static_cast<std::size_t>(i)] ? eff[g](i) - tau : 0.0;
        const double ej = flags[g][static_cast<std::size_t>(j)] ? eff[g](j) - tau : 0.0;
        s += ei * ej;
      }
    total += s / static_cast<double>(n);
  }
  return total / static_cast<double>(pop.n_groups());
}

// Mundlak coefficients from the normal equations, group means by direct
// summation. Column order: 1, W, X, W_bar, X_bar.
inline Eigen::VectorXd brute_force_mundlak(const GroupedPopulation& pop) {
  const auto N = static_cast<Eigen::Index>(pop.total_units());
  const auto D = pop.groups.front().X.cols();
  Eigen::MatrixXd x(N, 3 + 2 * D);
  Eigen::VectorXd y(N);
  Eigen::Index row = 0;
  for (const auto& g : pop.groups) {
    double wbar = 0;
    Eigen::RowVectorXd xbar = Eigen::RowVectorXd::Zero(D);
    for (std::size_t i = 0; i < g.size(); ++i) {
      wbar += g.W[i];
      xbar += g.X.row(static_cast<Eigen::Index>(i));
    }
    wbar /= static_cast<double>(g.size());
    xbar /= static_cast<double>(g.size());
    for (std::size_t i = 0; i < g.size(); ++i, ++row) {
      x(row, 0) = 1;
      x(row, 1) = g.W[i];
      x.block(row, 2, 1, D) = g.X.row(static_cast<Eigen::Index>(i));
      x(row, 2 + D) = wbar;
      x.block(row, 3 + D, 1, D) = xbar;
      y(row) = g.Y(static_cast<Eigen::Index>(i));
    }
  }
  const Eigen::MatrixXd gram = x.transpose() * x;
  return gram.inverse() * (x.transpose() * y);
}

}  // namespace testsupport
