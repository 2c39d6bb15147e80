#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmegnn/balance.hpp"
#include "gmegnn/drestimator.hpp"
#include "gmegnn/errors.hpp"

namespace gmegnn {

struct OlsFit {
  Eigen::VectorXd coefficients;
  std::vector<std::string> column_names;
  double residual_variance = 0.0;
  std::vector<std::string> warnings;

  double coefficient(const std::string& name) const {
    for (std::size_t k = 0; k < column_names.size(); ++k)
      if (column_names[k] == name) return coefficients(static_cast<Eigen::Index>(k));
    throw IndexError("no OLS column named '" + name + "'");
  }
};

// Least squares via column-pivoted Householder QR. Columns listed in
// `droppable` are removed (with a warning) if they do not raise the rank;
// any other dependent column is an error.
inline OlsFit ols_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                      std::vector<std::string> names, const std::vector<bool>& droppable) {
  const auto n = design.rows();
  if (y.size() != n) throw DimensionError("OLS: response length mismatch");
  OlsFit fit;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < design.cols(); ++c) {
    keep.push_back(c);
    Eigen::MatrixXd sub(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = design.col(keep[k]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    qr.setThreshold(1e-10);
    if (qr.rank() == static_cast<Eigen::Index>(keep.size())) continue;
    keep.pop_back();
    const auto& name = names[static_cast<std::size_t>(c)];
    if (!droppable[static_cast<std::size_t>(c)]) {
      throw EstimationError("OLS design is rank deficient at column '" + name + "'");
    }
    fit.warnings.push_back("dropped collinear column '" + name + "'");
  }
  const auto p = static_cast<Eigen::Index>(keep.size());
  if (n < p) throw EstimationError("OLS needs at least as many rows as columns");
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    x.col(k) = design.col(keep[static_cast<std::size_t>(k)]);
    fit.column_names.push_back(names[static_cast<std::size_t>(keep[static_cast<std::size_t>(k)])]);
  }
  fit.coefficients = x.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd resid = y - x * fit.coefficients;
  fit.residual_variance = n > p ? resid.squaredNorm() / static_cast<double>(n - p) : 0.0;
  return fit;
}

struct MundlakResult {
  double tau_hat = 0.0;  // coefficient on W_i
  OlsFit fit;
};

/*
 * Pooled OLS of Y on [1, W_i, X_i, W_bar_g, X_bar_g]. Group means come from
 * the balancing statistic. Group-mean columns that are collinear with the
 * rest (e.g. a single group) are dropped with a warning.
 */
inline MundlakResult mundlak_ols(const GroupedPopulation& pop) {
  pop.validate();
  const auto N = static_cast<Eigen::Index>(pop.total_units());
  const auto d = static_cast<Eigen::Index>(pop.groups.front().n_covariates());
  const Eigen::Index cols = 3 + 2 * d;
  Eigen::MatrixXd design(N, cols);
  Eigen::VectorXd y(N);
  Eigen::Index row = 0;
  for (const auto& g : pop.groups) {
    const auto s = balancing_statistic(g);
    for (std::size_t i = 0; i < g.size(); ++i, ++row) {
      const auto k = static_cast<Eigen::Index>(i);
      design(row, 0) = 1.0;
      design(row, 1) = g.W[i];
      design.block(row, 2, 1, d) = g.X.row(k);
      design(row, 2 + d) = s.w_bar;
      design.block(row, 3 + d, 1, d) = s.x_bar.transpose();
      y(row) = g.Y(k);
    }
  }
  std::vector<std::string> names{"intercept", "W"};
  std::vector<bool> droppable{false, false};
  for (Eigen::Index j = 0; j < d; ++j) {
    names.push_back("X" + std::to_string(j + 1));
    droppable.push_back(false);
  }
  names.push_back("W_bar");
  droppable.push_back(true);
  for (Eigen::Index j = 0; j < d; ++j) {
    names.push_back("X" + std::to_string(j + 1) + "_bar");
    droppable.push_back(true);
  }
  MundlakResult r;
  r.fit = ols_fit(design, y, std::move(names), droppable);
  r.tau_hat = r.fit.coefficient("W");
  return r;
}

// Same pipeline as GME-GNN without the balancing-statistic features.
inline EffectEstimate gnn_only_estimate(const GroupedPopulation& pop, const ExposureSpec& spec,
                                        Contrast c, const GcnConfig& cfg,
                                        const EstimatorOptions& opt = {}) {
  return dr_gnn_estimate(pop, spec, c, cfg, opt, false);
}

}  // namespace gmegnn
