#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmegnn/errors.hpp"
#include "gmegnn/netgraph.hpp"

namespace gmegnn {

// One group's sample: network, binary treatments, covariates and outcomes.
struct GroupData {
  std::string group_id;
  Graph graph;
  std::vector<int> W;  // 0/1, length N_g
  Eigen::MatrixXd X;   // N_g x d
  Eigen::VectorXd Y;   // N_g

  std::size_t size() const { return graph.n_nodes(); }
  std::size_t n_covariates() const { return static_cast<std::size_t>(X.cols()); }

  void validate() const {
    const auto n = size();
    const std::string where = "group '" + group_id + "': ";
    if (n < 2) throw DataError(where + "groups need at least 2 units");
    if (W.size() != n || static_cast<std::size_t>(X.rows()) != n ||
        static_cast<std::size_t>(Y.size()) != n) {
      throw DataError(where + "W, X, Y and graph sizes disagree");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (W[i] != 0 && W[i] != 1) {
        throw DataError(where + "W[" + std::to_string(i) + "] is not 0/1");
      }
    }
  }
};

struct GroupedPopulation {
  std::vector<GroupData> groups;

  std::size_t n_groups() const { return groups.size(); }

  std::size_t total_units() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
  }

  void validate() const {
    if (groups.empty()) throw DataError("population has no groups");
    std::set<std::string> ids;
    const auto d = groups.front().n_covariates();
    for (const auto& g : groups) {
      g.validate();
      if (!ids.insert(g.group_id).second) {
        throw DataError("duplicate group id '" + g.group_id + "'");
      }
      if (g.n_covariates() != d) {
        throw DataError("group '" + g.group_id + "' has " +
                        std::to_string(g.n_covariates()) +
                        " covariates, expected " + std::to_string(d));
      }
    }
  }
};

// Group-level balancing statistic: means of own treatment, own covariates,
// neighbor treatment sums and neighbor covariate sums.
struct BalancingStatistic {
  double w_bar = 0.0;
  Eigen::VectorXd x_bar;
  double aw_bar = 0.0;
  Eigen::VectorXd ax_bar;

  std::size_t dimension() const {
    return 2 + static_cast<std::size_t>(x_bar.size() + ax_bar.size());
  }

  // Packed as (w_bar, x_bar..., aw_bar, ax_bar...).
  Eigen::VectorXd as_vector() const {
    const auto d = x_bar.size();
    Eigen::VectorXd v(2 + 2 * d);
    v(0) = w_bar;
    v.segment(1, d) = x_bar;
    v(1 + d) = aw_bar;
    v.segment(2 + d, d) = ax_bar;
    return v;
  }
};

// Local statistic of unit i: (w_i, x_i, sum_j A_ij w_j, sum_j A_ij x_j) over
// the radius-1 neighborhood.
inline Eigen::VectorXd local_statistic(NodeId i, const GroupData& group) {
  const auto d = static_cast<Eigen::Index>(group.n_covariates());
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(2 + 2 * d);
  if (i >= group.size()) {
    throw IndexError("unit " + std::to_string(i) + " out of range in group '" +
                     group.group_id + "'");
  }
  phi(0) = group.W[i];
  phi.segment(1, d) = group.X.row(i).transpose();
  for (NodeId j : group.graph.neighbors(i)) {
    phi(1 + d) += group.W[j];
    phi.segment(2 + d, d) += group.X.row(j).transpose();
  }
  return phi;
}

inline BalancingStatistic balancing_statistic(const GroupData& group) {
  const auto n = group.size();
  if (n < 2) throw DataError("balancing statistic needs N_g >= 2");
  const auto d = static_cast<Eigen::Index>(group.n_covariates());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2 + 2 * d);
  for (NodeId i = 0; i < n; ++i) sum += local_statistic(i, group);
  sum /= static_cast<double>(n);

  BalancingStatistic s;
  s.w_bar = sum(0);
  s.x_bar = sum.segment(1, d);
  s.aw_bar = sum(1 + d);
  s.ax_bar = sum.segment(2 + d, d);
  return s;
}

// GNN input rows: X_i, optionally followed by the group's balancing
// statistic broadcast to every unit.
inline Eigen::MatrixXd node_features(const GroupData& group, bool include_balance) {
  if (!include_balance) return group.X;
  const auto n = static_cast<Eigen::Index>(group.size());
  const auto d = group.X.cols();
  const Eigen::VectorXd s = balancing_statistic(group).as_vector();
  Eigen::MatrixXd f(n, d + s.size());
  f.leftCols(d) = group.X;
  f.rightCols(s.size()) = s.transpose().replicate(n, 1);
  return f;
}

// Per-column z-scoring pooled over all groups' feature blocks. Columns with
// zero pooled variance are only centered.
inline void standardize_pooled(std::vector<Eigen::MatrixXd>& blocks) {
  if (blocks.empty()) return;
  const auto f = blocks.front().cols();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(f);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(f);
  double rows = 0.0;
  for (const auto& b : blocks) {
    if (b.cols() != f) throw DimensionError("feature blocks differ in width");
    sum += b.colwise().sum().transpose();
    rows += static_cast<double>(b.rows());
  }
  const Eigen::VectorXd mean = sum / rows;
  for (const auto& b : blocks) {
    sq += (b.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  Eigen::VectorXd sd = (sq / rows).array().sqrt();
  for (Eigen::Index c = 0; c < f; ++c) {
    if (!(sd(c) > 1e-12)) sd(c) = 1.0;
  }
  for (auto& b : blocks) {
    b = (b.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
  }
}

}  // namespace gmegnn
