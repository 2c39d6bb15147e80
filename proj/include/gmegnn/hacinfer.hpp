#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmegnn/balance.hpp"
#include "gmegnn/netgraph.hpp"
#include "gmegnn/overlap.hpp"
#include "gmegnn/parallel.hpp"

namespace gmegnn {

enum class BandwidthBranch {
  quarter_path_length,  // ceil(L / 4)
  fourth_root,          // ceil(L^{1/4})
  no_paths,             // no connected pair: diagonal-only kernel
};

inline std::string to_string(BandwidthBranch b) {
  switch (b) {
    case BandwidthBranch::quarter_path_length: return "quarter_L";
    case BandwidthBranch::fourth_root: return "fourth_root";
    case BandwidthBranch::no_paths: return "no_paths";
  }
  return "?";
}

struct Bandwidth {
  int b = 0;
  BandwidthBranch branch = BandwidthBranch::no_paths;
};

struct BandwidthPlan {
  std::vector<Bandwidth> per_group;  // aligned with population groups
};

// Threshold 2 log N / log delta on the average path length. Natural logs;
// delta <= 1 makes the threshold +infinity.
inline Bandwidth bandwidth(std::optional<double> avg_path_length, double avg_degree,
                           std::size_t n) {
  if (n < 1) throw ParameterError("bandwidth requires n >= 1");
  if (!avg_path_length) return {0, BandwidthBranch::no_paths};
  const double L = *avg_path_length;
  const double threshold = avg_degree <= 1.0
                               ? std::numeric_limits<double>::infinity()
                               : 2.0 * std::log(static_cast<double>(n)) / std::log(avg_degree);
  if (L < threshold) {
    return {static_cast<int>(std::ceil(0.25 * L)), BandwidthBranch::quarter_path_length};
  }
  return {static_cast<int>(std::ceil(std::pow(L, 0.25))), BandwidthBranch::fourth_root};
}

inline Bandwidth bandwidth(const GraphStats& stats, std::size_t n) {
  return bandwidth(stats.avg_path_length, stats.avg_degree, n);
}

inline BandwidthPlan plan_bandwidths(const GroupedPopulation& pop, std::size_t workers = 1) {
  BandwidthPlan plan;
  plan.per_group.resize(pop.n_groups());
  parallel_for(pop.n_groups(), workers, [&](std::size_t g) {
    const auto& grp = pop.groups[g];
    plan.per_group[g] = bandwidth(graph_stats(grp.graph), grp.size());
  });
  return plan;
}

struct HacResult {
  double sigma2 = 0.0;      // floored at 0
  double raw_sigma2 = 0.0;  // before flooring
  bool negative_flag = false;
  std::vector<double> group_contribution;  // N_g^{-1} sum_i sum_j ... per group
  std::vector<std::uint8_t> group_negative;
};

/*
 * Network HAC variance with the uniform kernel 1{l(i,j) <= b_g}:
 *   M^{-1} sum_g N_g^{-1} sum_i sum_j e_i e_j 1{l(i,j) <= b_g},
 *   e_i = B_i (tau_i - tau_hat).
 * Pairs are enumerated by radius-b_g BFS balls; disconnected pairs never
 * enter.
 */
inline HacResult hac_variance(const GroupedPopulation& pop,
                              const std::vector<Eigen::VectorXd>& unit_effects, double tau_hat,
                              const std::vector<Mask>& flags, const BandwidthPlan& plan,
                              std::size_t workers = 1) {
  const auto M = pop.n_groups();
  if (unit_effects.size() != M || flags.size() != M || plan.per_group.size() != M) {
    throw DimensionError("hac_variance: per-group inputs do not match the population");
  }
  HacResult r;
  r.group_contribution.assign(M, 0.0);
  r.group_negative.assign(M, 0);
  parallel_for(M, workers, [&](std::size_t g) {
    const auto& grp = pop.groups[g];
    const auto n = grp.size();
    if (static_cast<std::size_t>(unit_effects[g].size()) != n || flags[g].size() != n) {
      throw DimensionError("hac_variance: group '" + grp.group_id + "' size mismatch");
    }
    Eigen::VectorXd e(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      e(static_cast<Eigen::Index>(i)) =
          flags[g][i] ? unit_effects[g](static_cast<Eigen::Index>(i)) - tau_hat : 0.0;
    }
    const int b = plan.per_group[g].b;
    BfsWorkspace ws;
    double total = 0.0;
    for (NodeId i = 0; i < n; ++i) {
      const double ei = e(i);
      if (ei == 0.0) continue;
      double acc = 0.0;
      bfs_ball(grp.graph, i, b, ws, [&](NodeId j, int) { acc += e(j); });
      total += ei * acc;
    }
    r.group_contribution[g] = total / static_cast<double>(n);
    r.group_negative[g] = total < 0.0;
  });
  double s = 0.0;
  for (double c : r.group_contribution) s += c;
  r.raw_sigma2 = s / static_cast<double>(M);
  r.negative_flag = r.raw_sigma2 < 0.0;
  r.sigma2 = std::max(0.0, r.raw_sigma2);
  return r;
}

// se = sqrt(sigma2 / N_total), divided by b_bar for the overlap-normalized
// estimator.
inline double standard_error(double sigma2_hat, std::size_t n_total, double b_bar,
                             bool normalize) {
  if (sigma2_hat < 0.0) throw ParameterError("sigma2_hat must be >= 0");
  if (n_total == 0) throw ParameterError("standard_error needs N_total > 0");
  double se = std::sqrt(sigma2_hat / static_cast<double>(n_total));
  if (normalize) {
    if (!(b_bar > 0.0)) throw EstimationError("overlap share is zero");
    se /= b_bar;
  }
  return se;
}

}  // namespace gmegnn
