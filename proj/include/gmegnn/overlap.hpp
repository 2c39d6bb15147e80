#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmegnn/errors.hpp"
#include "gmegnn/gnn.hpp"

namespace gmegnn {

struct Contrast {
  int t = 1;
  int t_prime = 0;
};

// Fitted p_t and mu_t for one group, keyed by exposure level.
struct GroupNuisances {
  std::map<int, Eigen::VectorXd> p_hat;
  std::map<int, Eigen::VectorXd> mu_hat;
};

using NuisanceEstimates = std::vector<GroupNuisances>;

struct OverlapSet {
  std::vector<Mask> flags;  // B_i per group
  double eta = 0.01;
  double b_bar = 0.0;

  // M^{-1} sum_g N_g^{-1} sum_i B_i
  double recompute_b_bar() const {
    if (flags.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& f : flags) {
      if (f.empty()) continue;
      double s = 0;
      for (auto b : f) s += b ? 1 : 0;
      acc += s / static_cast<double>(f.size());
    }
    return acc / static_cast<double>(flags.size());
  }

  std::size_t count() const {
    std::size_t c = 0;
    for (const auto& f : flags)
      for (auto b : f) c += b ? 1 : 0;
    return c;
  }
};

/*
 * B_i = 1 iff both arms' propensities lie in [eta, 1 - eta]. Groups without
 * a fitted propensity for either arm get B_i = 0 throughout.
 */
inline OverlapSet overlap_flags(const NuisanceEstimates& nuisances, Contrast c, double eta) {
  if (!(eta > 0.0 && eta < 0.5)) throw ParameterError("eta must be in (0, 0.5)");
  OverlapSet o;
  o.eta = eta;
  o.flags.reserve(nuisances.size());
  auto inside = [eta](double p) { return p >= eta && p <= 1.0 - eta; };
  for (const auto& g : nuisances) {
    auto pt = g.p_hat.find(c.t);
    auto ptp = g.p_hat.find(c.t_prime);
    if (pt == g.p_hat.end() || ptp == g.p_hat.end()) {
      const auto n = g.p_hat.empty() ? 0 : g.p_hat.begin()->second.size();
      o.flags.emplace_back(static_cast<std::size_t>(n), 0);
      continue;
    }
    if (pt->second.size() != ptp->second.size()) {
      throw DimensionError("propensity vectors differ in length within a group");
    }
    Mask f(static_cast<std::size_t>(pt->second.size()));
    for (Eigen::Index i = 0; i < pt->second.size(); ++i) {
      f[static_cast<std::size_t>(i)] = inside(pt->second(i)) && inside(ptp->second(i));
    }
    o.flags.push_back(std::move(f));
  }
  o.b_bar = o.recompute_b_bar();
  if (o.count() == 0) {
    throw EstimationError("empty overlap set: no unit has both propensities in [" +
                          std::to_string(eta) + ", " + std::to_string(1.0 - eta) + "]");
  }
  return o;
}

}  // namespace gmegnn
