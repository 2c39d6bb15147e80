#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gmegnn/balance.hpp"
#include "gmegnn/baselines.hpp"
#include "gmegnn/drestimator.hpp"
#include "gmegnn/errors.hpp"
#include "gmegnn/exposure.hpp"
#include "gmegnn/gnn.hpp"
#include "gmegnn/netgraph.hpp"
#include "gmegnn/parallel.hpp"
#include "gmegnn/rng.hpp"

namespace gmegnn {

enum class Heterogeneity { low, high };
enum class Dependence { weak, strong };

inline std::string to_string(Heterogeneity h) { return h == Heterogeneity::low ? "low" : "high"; }
inline std::string to_string(Dependence d) { return d == Dependence::weak ? "weak" : "strong"; }

// Data generating process constants.
struct DgpParams {
  double alpha_sd = 1.5;
  double mu_x_sd = 1.0;
  std::array<double, 4> gamma{0.5, 0.5, 0.2, 0.5};  // own X, neighbor mean X, degree, mu_X
  double beta = 1.5;
  double delta = 0.8;
  double eps_sd = 0.5;
  double tau_mean = 0.5;
  double tau_sd = 0.0;
  std::size_t ws_k = 4;
  double ws_p = 0.1;

  // Heterogeneity sets the group-level spreads, dependence sets the
  // confounding strength, spillover size and network density.
  static DgpParams for_regime(Heterogeneity h, Dependence d) {
    DgpParams p;
    if (h == Heterogeneity::high) {
      p.alpha_sd = 3.0;
      p.mu_x_sd = 2.0;
      p.tau_sd = 0.15;
    }
    if (d == Dependence::strong) {
      p.gamma = {1.5, 1.5, 0.8, 1.5};
      p.delta = 3.0;
      p.ws_k = 8;
      p.ws_p = 0.5;
    }
    return p;
  }

  void validate() const {
    if (alpha_sd < 0 || mu_x_sd < 0 || eps_sd < 0 || tau_sd < 0) {
      throw ParameterError("DGP standard deviations must be >= 0");
    }
    if (!std::isfinite(beta) || !std::isfinite(delta)) {
      throw ParameterError("DGP beta and delta must be finite");
    }
  }
};

struct Scenario {
  Heterogeneity heterogeneity = Heterogeneity::low;
  Dependence dependence = Dependence::weak;
  std::size_t M = 20;
  std::size_t ng_min = 100;
  std::size_t ng_max = 200;
  std::size_t replications = 50;
  std::uint64_t base_seed = 7;
  DgpParams dgp;

  static Scenario make(Heterogeneity h, Dependence d) {
    Scenario s;
    s.heterogeneity = h;
    s.dependence = d;
    s.dgp = DgpParams::for_regime(h, d);
    return s;
  }

  std::string name() const { return to_string(heterogeneity) + "-" + to_string(dependence); }

  void validate() const {
    if (M < 1) throw ParameterError("scenario needs M >= 1");
    if (ng_min < 2 || ng_min > ng_max) throw ParameterError("scenario needs 2 <= ng_min <= ng_max");
    if (replications < 1) throw ParameterError("scenario needs replications >= 1");
    if (ng_min <= dgp.ws_k) throw ParameterError("ng_min must exceed the lattice degree ws_k");
    dgp.validate();
  }
};

struct GroupTruth {
  double alpha = 0.0;
  double mu_x = 0.0;
  double tau = 0.0;
  Eigen::VectorXd treat_prob;     // P(W_i = 1 | X, A)
  Eigen::VectorXd neighbor_x;     // mean neighbor covariate, 0 for isolated units
  Eigen::VectorXd treated_frac;   // realized sum_j A_ij W_j / deg_i, 0 for isolated units
};

struct ReplicationTruth {
  double gamma0 = 0.0;
  DgpParams params;
  std::vector<GroupTruth> groups;
};

struct Replication {
  GroupedPopulation population;
  ReplicationTruth truth;
};

inline Eigen::VectorXd neighbor_mean(const Graph& g, const Eigen::VectorXd& v) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
  for (NodeId i = 0; i < g.n_nodes(); ++i) {
    const auto nb = g.neighbors(i);
    if (nb.empty()) continue;
    double s = 0;
    for (NodeId j : nb) s += v(j);
    out(i) = s / static_cast<double>(nb.size());
  }
  return out;
}

// gamma1 X_i + gamma2 nbrX_i + gamma3 deg_i + gamma4 mu_X,g for every unit.
inline Eigen::VectorXd treatment_linear_terms(const DgpParams& p, const GroupData& grp,
                                              double mu_x) {
  const Eigen::VectorXd x = grp.X.col(0);
  const Eigen::VectorXd nx = neighbor_mean(grp.graph, x);
  Eigen::VectorXd lin(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    lin(i) = p.gamma[0] * x(i) + p.gamma[1] * nx(i) +
             p.gamma[2] * static_cast<double>(grp.graph.degree(static_cast<NodeId>(i))) +
             p.gamma[3] * mu_x;
  }
  return lin;
}

inline double mean_propensity(const std::vector<Eigen::VectorXd>& linear_terms, double gamma0) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& v : linear_terms) {
    for (Eigen::Index i = 0; i < v.size(); ++i) s += sigmoid(gamma0 + v(i));
    n += static_cast<std::size_t>(v.size());
  }
  return s / static_cast<double>(n);
}

/*
 * Bisection for the intercept that makes the average treatment probability
 * 0.5. The bracket starts symmetric around 0 and is widened if needed.
 */
inline double calibrate_gamma0(const std::vector<Eigen::VectorXd>& linear_terms) {
  std::size_t n = 0;
  for (const auto& v : linear_terms) n += static_cast<std::size_t>(v.size());
  if (n == 0) throw ParameterError("calibrate_gamma0 needs at least one unit");
  double lo = -10.0, hi = 10.0;
  for (int widen = 0; mean_propensity(linear_terms, lo) > 0.5 ||
                      mean_propensity(linear_terms, hi) < 0.5;
       ++widen) {
    if (widen >= 20) throw EstimationError("gamma0 calibration: bracket failure");
    lo *= 2.0;
    hi *= 2.0;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double m = mean_propensity(linear_terms, mid);
    if (m == 0.5 || mid == lo || mid == hi) return mid;
    (m < 0.5 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double calibrate_gamma0(const DgpParams& p, const GroupedPopulation& pop,
                               const std::vector<double>& mu_x) {
  std::vector<Eigen::VectorXd> lin;
  lin.reserve(pop.n_groups());
  for (std::size_t g = 0; g < pop.n_groups(); ++g) {
    lin.push_back(treatment_linear_terms(p, pop.groups[g], mu_x.at(g)));
  }
  return calibrate_gamma0(lin);
}

inline Eigen::VectorXd treated_fraction(const Graph& g, const std::vector<int>& w) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.n_nodes()));
  for (NodeId i = 0; i < g.n_nodes(); ++i) {
    const auto nb = g.neighbors(i);
    if (nb.empty()) continue;
    int s = 0;
    for (NodeId j : nb) s += w[j];
    f(i) = static_cast<double>(s) / static_cast<double>(nb.size());
  }
  return f;
}

inline std::uint64_t replication_seed(std::uint64_t base_seed, std::size_t rep_index) {
  return derive_seed(base_seed, {static_cast<std::uint64_t>(rep_index)});
}

// One simulated sample; fully determined by (scenario.base_seed, rep_index).
inline Replication generate_replication(const Scenario& sc, std::size_t rep_index) {
  sc.validate();
  const DgpParams& p = sc.dgp;
  Rng rng(replication_seed(sc.base_seed, rep_index));
  std::uniform_int_distribution<std::size_t> size_dist(sc.ng_min, sc.ng_max);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  auto normal = [&](double mean, double sd) { return mean + sd * std_normal(rng); };

  Replication rep;
  rep.truth.params = p;
  auto& pop = rep.population;
  pop.groups.resize(sc.M);
  rep.truth.groups.resize(sc.M);
  std::vector<double> mu_x(sc.M);
  for (std::size_t g = 0; g < sc.M; ++g) {
    const std::size_t n = size_dist(rng);
    const std::uint64_t graph_seed = rng();
    auto& grp = pop.groups[g];
    auto& gt = rep.truth.groups[g];
    grp.group_id = "g" + std::to_string(g);
    grp.graph = ws_generate(n, p.ws_k, p.ws_p, graph_seed);
    gt.alpha = normal(0.0, p.alpha_sd);
    gt.mu_x = normal(0.0, p.mu_x_sd);
    gt.tau = p.tau_sd > 0.0 ? normal(p.tau_mean, p.tau_sd) : p.tau_mean;
    mu_x[g] = gt.mu_x;
    grp.X.resize(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) grp.X(static_cast<Eigen::Index>(i), 0) = normal(gt.mu_x, 1.0);
  }

  std::vector<Eigen::VectorXd> lin(sc.M);
  for (std::size_t g = 0; g < sc.M; ++g) lin[g] = treatment_linear_terms(p, pop.groups[g], mu_x[g]);
  rep.truth.gamma0 = calibrate_gamma0(lin);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t g = 0; g < sc.M; ++g) {
    auto& grp = pop.groups[g];
    auto& gt = rep.truth.groups[g];
    const auto n = grp.size();
    gt.treat_prob = lin[g].unaryExpr([&](double v) { return sigmoid(rep.truth.gamma0 + v); });
    gt.neighbor_x = neighbor_mean(grp.graph, grp.X.col(0));
    grp.W.resize(n);
    for (std::size_t i = 0; i < n; ++i) grp.W[i] = unif(rng) < gt.treat_prob(static_cast<Eigen::Index>(i)) ? 1 : 0;
    gt.treated_frac = treated_fraction(grp.graph, grp.W);
    const auto T = any_treated_neighbor(grp);
    grp.Y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      grp.Y(k) = gt.alpha + p.beta * grp.X(k, 0) + gt.tau * T.levels[i] +
                 p.delta * gt.treated_frac(k) + normal(0.0, p.eps_sd);
    }
  }
  return rep;
}

// Per-unit oracle effects of exposure (T=1 vs T=0) plus which units have a
// defined effect.
struct OracleEffects {
  std::vector<Eigen::VectorXd> unit_effect;
  std::vector<Mask> valid;
  std::size_t n_excluded = 0;
};

/*
 * tau_g + delta * E[frac_i | T_i = 1, X, A] per unit, the conditional mean
 * estimated from n_redraws fresh draws of W under the calibrated assignment
 * model. Units never exposed in any redraw are excluded.
 */
inline OracleEffects oracle_unit_effects(const GroupedPopulation& pop,
                                         const ReplicationTruth& truth, std::size_t n_redraws,
                                         std::uint64_t seed) {
  OracleEffects o;
  const auto M = pop.n_groups();
  o.unit_effect.resize(M);
  o.valid.resize(M);
  const double delta = truth.params.delta;
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t g = 0; g < M; ++g) {
    const auto& grp = pop.groups[g];
    const auto& gt = truth.groups[g];
    const auto n = grp.size();
    o.unit_effect[g] = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), gt.tau);
    o.valid[g].assign(n, 1);
    if (delta == 0.0) continue;
    if (n_redraws == 0) throw ParameterError("oracle truth needs n_redraws >= 1 when delta != 0");
    std::vector<double> frac_sum(n, 0.0);
    std::vector<std::size_t> exposed(n, 0);
    std::vector<int> w(n);
    for (std::size_t r = 0; r < n_redraws; ++r) {
      for (std::size_t i = 0; i < n; ++i) w[i] = unif(rng) < gt.treat_prob(static_cast<Eigen::Index>(i)) ? 1 : 0;
      for (NodeId i = 0; i < n; ++i) {
        const auto nb = grp.graph.neighbors(i);
        int s = 0;
        for (NodeId j : nb) s += w[j];
        if (s == 0) continue;
        ++exposed[i];
        frac_sum[i] += static_cast<double>(s) / static_cast<double>(nb.size());
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (exposed[i] == 0) {
        o.valid[g][i] = 0;
        ++o.n_excluded;
        continue;
      }
      o.unit_effect[g](static_cast<Eigen::Index>(i)) +=
          delta * frac_sum[i] / static_cast<double>(exposed[i]);
    }
  }
  return o;
}

// Group-weighted mean of the oracle effects, matching the estimator's
// M^{-1} sum_g N_g^{-1} sum_i weighting; restricted to `flags` when given.
inline double weighted_truth(const OracleEffects& o, const std::vector<Mask>* flags = nullptr) {
  double num = 0.0, den = 0.0;
  for (std::size_t g = 0; g < o.unit_effect.size(); ++g) {
    const auto n = static_cast<double>(o.valid[g].size());
    for (std::size_t i = 0; i < o.valid[g].size(); ++i) {
      if (!o.valid[g][i] || (flags && !(*flags)[g][i])) continue;
      num += o.unit_effect[g](static_cast<Eigen::Index>(i)) / n;
      den += 1.0 / n;
    }
  }
  if (den == 0.0) throw EstimationError("oracle truth undefined: no valid unit");
  return num / den;
}

inline double oracle_truth(const GroupedPopulation& pop, const ReplicationTruth& truth,
                           std::size_t n_redraws, std::uint64_t seed = 0) {
  return weighted_truth(oracle_unit_effects(pop, truth, n_redraws, seed));
}

/*
 * True nuisances for the any-treated-neighbor contrast (1 vs 0):
 *   p_0 = prod_j (1 - pi_j), p_1 = 1 - p_0,
 *   mu_0 = alpha + beta X, mu_1 = mu_0 + tau_g + delta E[frac | T = 1],
 * with E[frac | T = 1] = mean_j(pi_j) / p_1 because frac > 0 iff T = 1.
 */
inline NuisanceEstimates true_nuisances(const GroupedPopulation& pop,
                                        const ReplicationTruth& truth) {
  const auto& p = truth.params;
  NuisanceEstimates out(pop.n_groups());
  for (std::size_t g = 0; g < pop.n_groups(); ++g) {
    const auto& grp = pop.groups[g];
    const auto& gt = truth.groups[g];
    const auto n = static_cast<Eigen::Index>(grp.size());
    Eigen::VectorXd p0(n), p1(n), mu0(n), mu1(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto nb = grp.graph.neighbors(static_cast<NodeId>(i));
      double none = 1.0, pi_sum = 0.0;
      for (NodeId j : nb) {
        none *= 1.0 - gt.treat_prob(j);
        pi_sum += gt.treat_prob(j);
      }
      p0(i) = none;
      p1(i) = 1.0 - none;
      mu0(i) = gt.alpha + p.beta * grp.X(i, 0);
      const double cond_frac =
          nb.empty() || p1(i) <= 0.0 ? 0.0 : (pi_sum / static_cast<double>(nb.size())) / p1(i);
      mu1(i) = mu0(i) + gt.tau + p.delta * cond_frac;
    }
    out[g].p_hat[0] = p0;
    out[g].p_hat[1] = p1;
    out[g].mu_hat[0] = mu0;
    out[g].mu_hat[1] = mu1;
  }
  return out;
}

enum class Method { gme_gnn, gnn_only, mundlak, oracle_dr };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::gme_gnn: return "gme-gnn";
    case Method::gnn_only: return "gnn-only";
    case Method::mundlak: return "mundlak";
    case Method::oracle_dr: return "oracle-dr";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "gme-gnn") return Method::gme_gnn;
  if (s == "gnn-only") return Method::gnn_only;
  if (s == "mundlak") return Method::mundlak;
  if (s == "oracle-dr") return Method::oracle_dr;
  throw ParameterError("unknown method '" + std::string(s) +
                       "' (expected gme-gnn, gnn-only, mundlak or oracle-dr)");
}

struct SimulationOptions {
  std::size_t workers = 1;
  std::size_t oracle_redraws = 1000;
  EstimatorOptions estimator;  // workers inside a replication are forced to 1
};

struct RawRow {
  std::size_t rep_index = 0;
  Method method = Method::gme_gnn;
  bool ok = false;
  double tau_hat = std::numeric_limits<double>::quiet_NaN();
  double tau_star = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double b_bar = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct MetricsSummary {
  Method method = Method::gme_gnn;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  // Share of replications whose 95% interval covers tau_star; NaN when the
  // method reports no standard error.
  double coverage = std::numeric_limits<double>::quiet_NaN();
};

// MAE, MSE and RMSE of tau_hat against tau_star over successful rows.
inline MetricsSummary summarize(Method m, const std::vector<RawRow>& rows) {
  MetricsSummary s;
  s.method = m;
  double abs_sum = 0, sq_sum = 0;
  std::size_t covered = 0, with_se = 0;
  for (const auto& r : rows) {
    if (r.method != m) continue;
    if (!r.ok) {
      ++s.n_failed;
      continue;
    }
    ++s.n_ok;
    const double e = r.tau_hat - r.tau_star;
    abs_sum += std::abs(e);
    sq_sum += e * e;
    if (std::isfinite(r.se)) {
      ++with_se;
      covered += std::abs(e) <= 1.96 * r.se ? 1 : 0;
    }
  }
  if (s.n_ok > 0) {
    s.mae = abs_sum / static_cast<double>(s.n_ok);
    s.mse = sq_sum / static_cast<double>(s.n_ok);
    s.rmse = std::sqrt(s.mse);
  }
  if (with_se > 0) s.coverage = static_cast<double>(covered) / static_cast<double>(with_se);
  return s;
}

struct ScenarioResult {
  Scenario scenario;
  std::vector<RawRow> rows;  // ordered by (rep_index, method order)
  std::vector<MetricsSummary> summaries;
};

// Runs every method on one replication and scores it against the oracle.
inline std::vector<RawRow> run_replication(const Scenario& sc, std::size_t rep_index,
                                           const std::vector<Method>& methods,
                                           const GcnConfig& gnn, const SimulationOptions& opt) {
  const Replication rep = generate_replication(sc, rep_index);
  const std::uint64_t rseed = replication_seed(sc.base_seed, rep_index);
  const OracleEffects oracle =
      oracle_unit_effects(rep.population, rep.truth, opt.oracle_redraws,
                          derive_seed(rseed, {hash_label("oracle")}));
  EstimatorOptions eo = opt.estimator;
  eo.workers = 1;
  GcnConfig cfg = gnn;
  cfg.seed = derive_seed(gnn.seed, {static_cast<std::uint64_t>(rep_index)});
  const ExposureSpec spec{ExposureMapping::any_treated_neighbor, {}};
  const Contrast contrast{1, 0};

  std::vector<RawRow> rows;
  for (Method m : methods) {
    RawRow row;
    row.rep_index = rep_index;
    row.method = m;
    try {
      if (m == Method::mundlak) {
        row.tau_hat = mundlak_ols(rep.population).tau_hat;
        row.tau_star = weighted_truth(oracle);
        row.b_bar = 1.0;
      } else {
        EffectEstimate est;
        if (m == Method::oracle_dr) {
          const auto assignments = assign_all(rep.population, spec);
          est = estimate_from_nuisances(rep.population, assignments,
                                        true_nuisances(rep.population, rep.truth), contrast, eo,
                                        "oracle-dr");
        } else {
          est = dr_gnn_estimate(rep.population, spec, contrast, cfg, eo, m == Method::gme_gnn);
        }
        row.tau_hat = est.tau_hat;
        row.se = est.std_error;
        row.b_bar = est.b_bar;
        row.tau_star = weighted_truth(oracle, eo.normalize ? &est.flags : nullptr);
      }
      row.ok = std::isfinite(row.tau_hat) && std::isfinite(row.tau_star);
      if (!row.ok) row.error = "non-finite estimate";
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/*
 * Replication campaign. Replications run concurrently with independent
 * seeded streams and are collected by index, so the rows do not depend on
 * the worker count.
 */
inline ScenarioResult run_scenario(const Scenario& sc, const std::vector<Method>& methods,
                                   const GcnConfig& gnn, const SimulationOptions& opt = {}) {
  sc.validate();
  gnn.validate();
  opt.estimator.validate();
  if (methods.empty()) throw ParameterError("run_scenario needs at least one method");
  std::vector<std::vector<RawRow>> per_rep(sc.replications);
  parallel_for(sc.replications, opt.workers, [&](std::size_t r) {
    per_rep[r] = run_replication(sc, r, methods, gnn, opt);
  });
  ScenarioResult res;
  res.scenario = sc;
  for (auto& v : per_rep)
    for (auto& row : v) res.rows.push_back(std::move(row));
  for (Method m : methods) res.summaries.push_back(summarize(m, res.rows));
  return res;
}

}  // namespace gmegnn
