#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gmegnn/gnn.hpp"
#include "gmegnn/netgraph.hpp"
#include "gmegnn/rng.hpp"

namespace gmegnn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t n_checked = 0;
  std::size_t n_skipped = 0;  // coordinates straddling a ReLU kink
};

/*
 * Central differences on the mean loss with a fixed dropout pattern.
 * Relative error is |a - n| / max(1, |a| + |n|) per coordinate. A coordinate
 * is skipped when the perturbation flips the sign of any hidden
 * pre-activation, since the loss is not differentiable there.
 */
inline GradCheckResult check_gradient(const GcnModel& m, const NormalizedAdjacency& adj,
                                      const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const Mask& mask, const Eigen::MatrixXd* dropout,
                                      double h = 1e-5) {
  GcnGradient g;
  loss_and_gradient(m, adj, x, y, mask, dropout, &g);
  const auto pattern = [&](const GcnModel& mm) {
    const Eigen::MatrixXd z = adj.matrix * (x * mm.W1);
    return ((z.rowwise() + mm.b1.transpose()).array() > 0.0).eval();
  };
  const auto base = pattern(m);

  GradCheckResult r;
  auto probe = [&](auto&& param_ref, double analytic) {
    GcnModel plus = m, minus = m;
    param_ref(plus) += h;
    param_ref(minus) -= h;
    if (!(pattern(plus) == base).all() || !(pattern(minus) == base).all()) {
      ++r.n_skipped;
      return;
    }
    const double lp = loss_and_gradient(plus, adj, x, y, mask, dropout, nullptr);
    const double lm = loss_and_gradient(minus, adj, x, y, mask, dropout, nullptr);
    const double numeric = (lp - lm) / (2.0 * h);
    const double err = std::abs(analytic - numeric) /
                       std::max(1.0, std::abs(analytic) + std::abs(numeric));
    r.max_rel_error = std::max(r.max_rel_error, err);
    ++r.n_checked;
  };
  for (Eigen::Index i = 0; i < m.W1.rows(); ++i)
    for (Eigen::Index j = 0; j < m.W1.cols(); ++j)
      probe([=](GcnModel& mm) -> double& { return mm.W1(i, j); }, g.W1(i, j));
  for (Eigen::Index j = 0; j < m.b1.size(); ++j)
    probe([=](GcnModel& mm) -> double& { return mm.b1(j); }, g.b1(j));
  for (Eigen::Index j = 0; j < m.W2.size(); ++j)
    probe([=](GcnModel& mm) -> double& { return mm.W2(j); }, g.W2(j));
  probe([](GcnModel& mm) -> double& { return mm.b2; }, g.b2);
  return r;
}

struct GradCheckInstance {
  NormalizedAdjacency adj;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Mask mask;
  GcnModel model;
  Eigen::MatrixXd dropout;
};

// Random small instance: Erdos-Renyi graph, Gaussian features, random mask.
inline GradCheckInstance random_instance(Task task, std::uint64_t seed, int max_n = 12,
                                         int max_f = 4, int max_h = 8) {
  Rng rng(seed);
  std::uniform_int_distribution<int> nd(3, max_n), fd(1, max_f), hd(1, max_h);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution edge(0.35), coin(0.5);
  const int n = nd(rng), f = fd(rng), h = hd(rng);
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (edge(rng)) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
  GradCheckInstance inst;
  inst.adj = normalize_adjacency(Graph::from_edges(static_cast<std::size_t>(n), edges));
  inst.x = Eigen::MatrixXd::NullaryExpr(n, f, [&] { return gauss(rng); });
  inst.y.resize(n);
  for (int i = 0; i < n; ++i) inst.y(i) = task == Task::binary ? (coin(rng) ? 1.0 : 0.0) : gauss(rng);
  inst.mask.assign(static_cast<std::size_t>(n), 1);
  for (int i = 0; i < n; ++i)
    if (coin(rng) && i > 0) inst.mask[static_cast<std::size_t>(i)] = 0;
  GcnConfig cfg;
  cfg.hidden = h;
  cfg.task = task;
  cfg.weight_init_scale = 2.0;
  inst.model = init_model(f, cfg, rng);
  for (Eigen::Index j = 0; j < inst.model.b1.size(); ++j) inst.model.b1(j) = 0.1 * gauss(rng);
  inst.model.b2 = 0.1 * gauss(rng);
  inst.dropout = make_dropout_scale(n, h, 0.2, rng);
  return inst;
}

}  // namespace gmegnn
