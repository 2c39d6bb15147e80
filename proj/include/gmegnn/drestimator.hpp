#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmegnn/balance.hpp"
#include "gmegnn/errors.hpp"
#include "gmegnn/exposure.hpp"
#include "gmegnn/gnn.hpp"
#include "gmegnn/hacinfer.hpp"
#include "gmegnn/overlap.hpp"
#include "gmegnn/parallel.hpp"
#include "gmegnn/rng.hpp"

namespace gmegnn {

// Which units a nuisance model is trained on.
enum class NuisanceScope {
  per_group,  // one model per group and level, on that group's graph only
  pooled,     // one model per level on the disjoint union of all groups
};

struct EstimatorOptions {
  double eta = 0.01;
  bool normalize = true;                // divide by the overlap share b_bar
  bool normalize_propensities = false;  // rescale one-vs-rest fits to sum to 1
  int cross_fit_folds = 0;              // reserved; only 0 is supported
  NuisanceScope scope = NuisanceScope::pooled;
  std::size_t workers = 1;

  void validate() const {
    if (!(eta > 0.0 && eta < 0.5)) throw ParameterError("eta must be in (0, 0.5)");
    if (cross_fit_folds > 1) throw ParameterError("cross-fitting is not implemented");
  }
};

struct GroupDiagnostics {
  std::string group_id;
  std::size_t n = 0;
  std::size_t n_overlap = 0;
  double tau_g = 0.0;
  Bandwidth bandwidth;
  double hac_contribution = 0.0;
  bool negative_flag = false;
  std::vector<std::string> warnings;
};

struct EffectEstimate {
  std::string method;
  Contrast contrast;
  double tau_hat = 0.0;      // the reported estimate (normalized when enabled)
  double tau_hat_raw = 0.0;  // literal M^{-1} sum_g tau_g, trimmed units as zeros
  double tau_hat_normalized = 0.0;
  bool normalized = true;
  double sigma2_hat = 0.0;
  double raw_sigma2 = 0.0;
  bool variance_floored = false;
  double std_error = 0.0;
  std::pair<double, double> ci95{0.0, 0.0};
  double b_bar = 0.0;
  std::vector<double> per_group_tau;
  std::vector<GroupDiagnostics> groups;
  std::vector<Eigen::VectorXd> unit_effects;
  std::vector<Mask> flags;
};

/*
 * Doubly robust score of one unit for the contrast (t, t'):
 *   1{T=t}(y - mu_t)/p_t + mu_t - [1{T=t'}(y - mu_t')/p_t' + mu_t'].
 * Each arm is formed first and then differenced, so swapping the contrast
 * negates the result exactly and t == t' gives exactly zero.
 */
inline double unit_dr(double y, int level, Contrast c, double p_t, double p_tp, double mu_t,
                      double mu_tp) {
  const double arm_t = (level == c.t ? (y - mu_t) / p_t : 0.0) + mu_t;
  const double arm_tp = (level == c.t_prime ? (y - mu_tp) / p_tp : 0.0) + mu_tp;
  return arm_t - arm_tp;
}

// N_g^{-1} sum_i B_i tau_i
inline double group_aggregate(const Eigen::VectorXd& effects, const Mask& flags) {
  if (static_cast<std::size_t>(effects.size()) != flags.size()) {
    throw DimensionError("group_aggregate: effects and flags differ in length");
  }
  if (flags.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) s += effects(static_cast<Eigen::Index>(i));
  return s / static_cast<double>(flags.size());
}

inline std::vector<ExposureAssignment> assign_all(const GroupedPopulation& pop,
                                                  const ExposureSpec& spec) {
  std::vector<ExposureAssignment> out;
  out.reserve(pop.n_groups());
  for (const auto& g : pop.groups) out.push_back(assign_exposure(g, spec));
  return out;
}

/*
 * Trimming, unit scores, group aggregation and HAC inference given fitted
 * (or true) nuisances. Units whose group lacks an outcome model for either
 * arm are treated as outside the overlap set.
 */
inline EffectEstimate estimate_from_nuisances(const GroupedPopulation& pop,
                                              const std::vector<ExposureAssignment>& assignments,
                                              const NuisanceEstimates& nuisances, Contrast c,
                                              const EstimatorOptions& opt,
                                              std::string method = "gme-gnn") {
  opt.validate();
  const auto M = pop.n_groups();
  if (assignments.size() != M || nuisances.size() != M) {
    throw DimensionError("estimate_from_nuisances: inputs do not match the population");
  }
  OverlapSet overlap = overlap_flags(nuisances, c, opt.eta);

  EffectEstimate est;
  est.method = std::move(method);
  est.contrast = c;
  est.normalized = opt.normalize;
  est.unit_effects.resize(M);
  est.per_group_tau.resize(M);
  est.groups.resize(M);

  const double lo = opt.eta / 2.0, hi = 1.0 - opt.eta / 2.0;
  auto clip = [&](double p) { return std::clamp(p, lo, hi); };
  for (std::size_t g = 0; g < M; ++g) {
    const auto& grp = pop.groups[g];
    const auto n = grp.size();
    auto& flags = overlap.flags[g];
    const auto& nu = nuisances[g];
    auto mt = nu.mu_hat.find(c.t);
    auto mtp = nu.mu_hat.find(c.t_prime);
    Eigen::VectorXd eff = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    auto& diag = est.groups[g];
    diag.group_id = grp.group_id;
    diag.n = n;
    if (mt == nu.mu_hat.end() || mtp == nu.mu_hat.end()) {
      std::fill(flags.begin(), flags.end(), 0);
      diag.warnings.push_back("no outcome model for a contrast level; group excluded");
    } else {
      const auto& pt = nu.p_hat.at(c.t);
      const auto& ptp = nu.p_hat.at(c.t_prime);
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        eff(k) = unit_dr(grp.Y(k), assignments[g].levels[i], c, clip(pt(k)), clip(ptp(k)),
                         mt->second(k), mtp->second(k));
      }
    }
    est.per_group_tau[g] = group_aggregate(eff, flags);
    diag.tau_g = est.per_group_tau[g];
    diag.n_overlap = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
    est.unit_effects[g] = std::move(eff);
  }
  overlap.b_bar = overlap.recompute_b_bar();
  if (overlap.count() == 0) throw EstimationError("empty overlap set after exclusions");

  double s = 0.0;
  for (double v : est.per_group_tau) s += v;
  est.tau_hat_raw = s / static_cast<double>(M);
  est.b_bar = overlap.b_bar;
  est.tau_hat_normalized = est.tau_hat_raw / est.b_bar;
  est.tau_hat = opt.normalize ? est.tau_hat_normalized : est.tau_hat_raw;

  const BandwidthPlan plan = plan_bandwidths(pop, opt.workers);
  const HacResult hac =
      hac_variance(pop, est.unit_effects, est.tau_hat, overlap.flags, plan, opt.workers);
  est.sigma2_hat = hac.sigma2;
  est.raw_sigma2 = hac.raw_sigma2;
  est.variance_floored = hac.negative_flag;
  est.std_error = standard_error(hac.sigma2, pop.total_units(), est.b_bar, opt.normalize);
  est.ci95 = {est.tau_hat - 1.96 * est.std_error, est.tau_hat + 1.96 * est.std_error};
  for (std::size_t g = 0; g < M; ++g) {
    est.groups[g].bandwidth = plan.per_group[g];
    est.groups[g].hac_contribution = hac.group_contribution[g];
    est.groups[g].negative_flag = hac.group_negative[g] != 0;
  }
  est.flags = std::move(overlap.flags);
  return est;
}

namespace detail {

enum : std::uint64_t { kRolePropensity = 1, kRoleOutcome = 2 };

inline std::vector<int> levels_to_fit(Contrast c, int K, const EstimatorOptions& opt) {
  std::set<int> lv{c.t, c.t_prime};
  if (opt.normalize_propensities)
    for (int k = 0; k < K; ++k) lv.insert(k);
  return {lv.begin(), lv.end()};
}

inline void renormalize(std::map<int, Eigen::VectorXd>& p) {
  if (p.empty()) return;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(p.begin()->second.size());
  for (const auto& [k, v] : p) total += v;
  for (auto& [k, v] : p) v = v.cwiseQuotient(total);
}

}  // namespace detail

/*
 * Fits p_t and mu_t with the GCN for every level the contrast needs. Node
 * features are X (plus the broadcast balancing statistic when
 * include_balance is set), z-scored per column over the whole population.
 * A group in which a contrast level does not occur keeps no nuisances for
 * that level, which removes it from the overlap set.
 */
inline NuisanceEstimates fit_nuisances(const GroupedPopulation& pop,
                                       const std::vector<ExposureAssignment>& assignments,
                                       Contrast c, int K, const GcnConfig& cfg,
                                       bool include_balance, const EstimatorOptions& opt) {
  const auto M = pop.n_groups();
  std::vector<Eigen::MatrixXd> features(M);
  for (std::size_t g = 0; g < M; ++g) features[g] = node_features(pop.groups[g], include_balance);
  standardize_pooled(features);
  const auto levels = detail::levels_to_fit(c, K, opt);
  NuisanceEstimates out(M);

  auto is_contrast_level = [&](int t) { return t == c.t || t == c.t_prime; };

  if (opt.scope == NuisanceScope::per_group) {
    parallel_for(M, opt.workers, [&](std::size_t g) {
      const auto& grp = pop.groups[g];
      try {
        const NormalizedAdjacency adj = normalize_adjacency(grp.graph);
        const auto gid = hash_label(grp.group_id);
        for (int t : levels) {
          GcnConfig pc = cfg;
          pc.seed = derive_seed(cfg.seed, {gid, static_cast<std::uint64_t>(t),
                                           detail::kRolePropensity});
          auto fit = fit_propensity(adj, features[g], assignments[g], t, pc);
          const bool present = assignments[g].count(t) > 0;
          if (is_contrast_level(t) && !present) continue;
          out[g].p_hat[t] = std::move(fit.p);
        }
        if (opt.normalize_propensities) detail::renormalize(out[g].p_hat);
        for (int t : {c.t, c.t_prime}) {
          if (assignments[g].count(t) == 0 || out[g].mu_hat.contains(t)) continue;
          GcnConfig oc = cfg;
          oc.seed = derive_seed(cfg.seed, {gid, static_cast<std::uint64_t>(t),
                                           detail::kRoleOutcome});
          out[g].mu_hat[t] = fit_outcome(adj, features[g], grp.Y, assignments[g], t, oc);
        }
      } catch (const std::exception& e) {
        throw EstimationError("group '" + grp.group_id + "': " + e.what());
      }
    });
    return out;
  }

  // Pooled: one operator over the disjoint union of all groups.
  std::vector<NormalizedAdjacency> blocks(M);
  parallel_for(M, opt.workers, [&](std::size_t g) {
    blocks[g] = normalize_adjacency(pop.groups[g].graph);
  });
  const NormalizedAdjacency adj = block_diagonal(blocks);
  const auto N = adj.size();
  Eigen::MatrixXd x(N, features.front().cols());
  Eigen::VectorXd y(N);
  ExposureAssignment all;
  all.K = K;
  std::vector<Eigen::Index> offset(M + 1, 0);
  for (std::size_t g = 0; g < M; ++g) {
    const auto n = static_cast<Eigen::Index>(pop.groups[g].size());
    offset[g + 1] = offset[g] + n;
    x.middleRows(offset[g], n) = features[g];
    y.segment(offset[g], n) = pop.groups[g].Y;
    all.levels.insert(all.levels.end(), assignments[g].levels.begin(),
                      assignments[g].levels.end());
  }
  std::vector<int> fit_levels = levels;
  std::vector<Eigen::VectorXd> p_all(fit_levels.size()), mu_all(fit_levels.size());
  parallel_for(fit_levels.size(), opt.workers, [&](std::size_t k) {
    const int t = fit_levels[k];
    GcnConfig pc = cfg;
    pc.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(t), detail::kRolePropensity});
    p_all[k] = fit_propensity(adj, x, all, t, pc).p;
    if (is_contrast_level(t) && all.count(t) > 0) {
      GcnConfig oc = cfg;
      oc.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(t), detail::kRoleOutcome});
      mu_all[k] = fit_outcome(adj, x, y, all, t, oc);
    }
  });
  for (std::size_t g = 0; g < M; ++g) {
    const auto n = offset[g + 1] - offset[g];
    for (std::size_t k = 0; k < fit_levels.size(); ++k) {
      const int t = fit_levels[k];
      const bool present = assignments[g].count(t) > 0;
      if (is_contrast_level(t) && !present) continue;
      out[g].p_hat[t] = p_all[k].segment(offset[g], n);
      if (mu_all[k].size() > 0) out[g].mu_hat[t] = mu_all[k].segment(offset[g], n);
    }
    if (opt.normalize_propensities) detail::renormalize(out[g].p_hat);
  }
  return out;
}

inline void require_levels(const std::vector<ExposureAssignment>& assignments, Contrast c,
                           int K) {
  for (int t : {c.t, c.t_prime}) {
    if (t < 0 || t >= K) {
      throw EstimationError("contrast level " + std::to_string(t) + " outside 0.." +
                            std::to_string(K - 1));
    }
    std::size_t n = 0;
    for (const auto& a : assignments) n += a.count(t);
    if (n == 0) {
      throw EstimationError("missing level: exposure level " + std::to_string(t) +
                            " does not occur in any group");
    }
  }
}

// Doubly robust estimate with GCN nuisances. include_balance selects between
// the balancing-statistic features and plain covariates.
inline EffectEstimate dr_gnn_estimate(const GroupedPopulation& pop, const ExposureSpec& spec,
                                      Contrast c, const GcnConfig& cfg,
                                      const EstimatorOptions& opt, bool include_balance) {
  pop.validate();
  opt.validate();
  cfg.validate();
  const int K = exposure_levels(spec);
  const auto assignments = assign_all(pop, spec);
  require_levels(assignments, c, K);
  const auto nuisances = fit_nuisances(pop, assignments, c, K, cfg, include_balance, opt);
  return estimate_from_nuisances(pop, assignments, nuisances, c, opt,
                                 include_balance ? "gme-gnn" : "gnn-only");
}

inline EffectEstimate gme_gnn_estimate(const GroupedPopulation& pop, const ExposureSpec& spec,
                                       Contrast c, const GcnConfig& cfg,
                                       const EstimatorOptions& opt = {}) {
  return dr_gnn_estimate(pop, spec, c, cfg, opt, true);
}

}  // namespace gmegnn
