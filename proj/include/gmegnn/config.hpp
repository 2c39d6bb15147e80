#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include "json.hpp"

#include "gmegnn/drestimator.hpp"
#include "gmegnn/errors.hpp"
#include "gmegnn/exposure.hpp"
#include "gmegnn/gnn.hpp"
#include "gmegnn/simlab.hpp"

/*
 * Sectioned key = value files:
 *
 *   [scenario]   heterogeneity, dependence, groups, ng_min, ng_max,
 *                replications, seed
 *   [dgp]        alpha_sd, mu_x_sd, gamma (JSON list of 4), beta, delta,
 *                eps_sd, tau_mean, tau_sd, ws_k, ws_p
 *   [gnn]        hidden, dropout, lr, epochs, seed, init_scale, scope
 *   [estimator]  eta, normalize, normalize_propensities, cross_fit_folds
 *   [exposure]   mapping, thresholds (JSON list)
 *   [simulation] methods (JSON list), oracle_redraws
 *
 * Lists use JSON syntax. Comment lines start with ';' or '#'.
 */
namespace gmegnn::config {

using Tree = boost::property_tree::ptree;

struct SimulateConfig {
  Scenario scenario = Scenario::make(Heterogeneity::low, Dependence::weak);
  GcnConfig gnn;
  SimulationOptions sim;
  std::vector<Method> methods{Method::gme_gnn, Method::gnn_only, Method::mundlak};
};

struct EstimateConfig {
  GcnConfig gnn;
  EstimatorOptions estimator;
  ExposureSpec exposure;
};

inline Tree parse_ini(std::istream& is, const std::string& name) {
  Tree t;
  try {
    boost::property_tree::read_ini(is, t);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(name + " line " + std::to_string(e.line()) + ": " + e.message());
  }
  return t;
}

inline Tree parse_ini_string(const std::string& text, const std::string& name = "<config>") {
  std::istringstream is(text);
  return parse_ini(is, name);
}

inline Tree load_ini(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_ini(is, path.string());
}

namespace detail {

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"scenario",
       {"heterogeneity", "dependence", "groups", "ng_min", "ng_max", "replications", "seed"}},
      {"dgp",
       {"alpha_sd", "mu_x_sd", "gamma", "beta", "delta", "eps_sd", "tau_mean", "tau_sd", "ws_k",
        "ws_p"}},
      {"gnn", {"hidden", "dropout", "lr", "epochs", "seed", "init_scale", "scope"}},
      {"estimator", {"eta", "normalize", "normalize_propensities", "cross_fit_folds"}},
      {"exposure", {"mapping", "thresholds"}},
      {"simulation", {"methods", "oracle_redraws"}},
  };
  return keys;
}

inline void check_keys(const Tree& t) {
  const auto& known = known_keys();
  for (const auto& [section, body] : t) {
    auto it = known.find(section);
    if (it == known.end()) throw ConfigError("unknown config section '" + section + "'");
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) {
        throw ConfigError("unknown config key '" + section + "." + key + "'");
      }
    }
  }
}

template <class T>
T get(const Tree& section, const std::string& path, const std::string& key) {
  const auto raw = section.get<std::string>(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1" || raw == "on") return true;
      if (raw == "false" || raw == "0" || raw == "off") return false;
      throw std::invalid_argument("not a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t pos = 0;
      const double v = std::stod(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument("trailing characters");
      return static_cast<T>(v);
    } else {
      std::size_t pos = 0;
      const long long v = std::stoll(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument("trailing characters");
      if (std::is_unsigned_v<T> && v < 0) throw std::invalid_argument("negative");
      return static_cast<T>(v);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + path + "." + key + "': invalid value '" + raw + "'");
  }
}

template <class T>
void maybe(const Tree& t, const std::string& section, const std::string& key, T& out) {
  auto sec = t.get_child_optional(section);
  if (!sec || !sec->get_child_optional(key)) return;
  out = get<T>(*sec, section, key);
}

inline nlohmann::json get_json(const Tree& t, const std::string& section, const std::string& key) {
  const auto raw = t.get_child(section).get<std::string>(key);
  try {
    return nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + section + "." + key + "': invalid list '" + raw + "'");
  }
}

inline bool has(const Tree& t, const std::string& section, const std::string& key) {
  auto sec = t.get_child_optional(section);
  return sec && sec->get_child_optional(key);
}

}  // namespace detail

inline void apply_gnn(const Tree& t, GcnConfig& gnn, EstimatorOptions& est) {
  using detail::maybe;
  maybe(t, "gnn", "hidden", gnn.hidden);
  maybe(t, "gnn", "dropout", gnn.dropout);
  maybe(t, "gnn", "lr", gnn.learning_rate);
  maybe(t, "gnn", "epochs", gnn.epochs);
  maybe(t, "gnn", "seed", gnn.seed);
  maybe(t, "gnn", "init_scale", gnn.weight_init_scale);
  if (detail::has(t, "gnn", "scope")) {
    const auto s = detail::get<std::string>(t.get_child("gnn"), "gnn", "scope");
    if (s == "pooled") est.scope = NuisanceScope::pooled;
    else if (s == "group") est.scope = NuisanceScope::per_group;
    else throw ConfigError("config key 'gnn.scope': expected pooled or group, got '" + s + "'");
  }
  maybe(t, "estimator", "eta", est.eta);
  maybe(t, "estimator", "normalize", est.normalize);
  maybe(t, "estimator", "normalize_propensities", est.normalize_propensities);
  maybe(t, "estimator", "cross_fit_folds", est.cross_fit_folds);
  try {
    gnn.validate();
    est.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

inline void apply_exposure(const Tree& t, ExposureSpec& spec) {
  if (detail::has(t, "exposure", "mapping")) {
    try {
      spec.mapping = parse_exposure_mapping(t.get_child("exposure").get<std::string>("mapping"));
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("config key 'exposure.mapping': ") + e.what());
    }
  }
  if (detail::has(t, "exposure", "thresholds")) {
    const auto j = detail::get_json(t, "exposure", "thresholds");
    try {
      spec.thresholds = j.get<std::vector<int>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key 'exposure.thresholds' must be a list of integers");
    }
  }
}

inline SimulateConfig simulate_config(const Tree& t) {
  detail::check_keys(t);
  using detail::maybe;
  SimulateConfig c;
  Heterogeneity h = Heterogeneity::low;
  Dependence d = Dependence::weak;
  if (detail::has(t, "scenario", "heterogeneity")) {
    const auto v = t.get_child("scenario").get<std::string>("heterogeneity");
    if (v == "low") h = Heterogeneity::low;
    else if (v == "high") h = Heterogeneity::high;
    else throw ConfigError("config key 'scenario.heterogeneity': expected low or high, got '" + v + "'");
  }
  if (detail::has(t, "scenario", "dependence")) {
    const auto v = t.get_child("scenario").get<std::string>("dependence");
    if (v == "weak") d = Dependence::weak;
    else if (v == "strong") d = Dependence::strong;
    else throw ConfigError("config key 'scenario.dependence': expected weak or strong, got '" + v + "'");
  }
  c.scenario = Scenario::make(h, d);
  auto& s = c.scenario;
  maybe(t, "scenario", "groups", s.M);
  maybe(t, "scenario", "ng_min", s.ng_min);
  maybe(t, "scenario", "ng_max", s.ng_max);
  maybe(t, "scenario", "replications", s.replications);
  maybe(t, "scenario", "seed", s.base_seed);

  auto& p = s.dgp;
  maybe(t, "dgp", "alpha_sd", p.alpha_sd);
  maybe(t, "dgp", "mu_x_sd", p.mu_x_sd);
  maybe(t, "dgp", "beta", p.beta);
  maybe(t, "dgp", "delta", p.delta);
  maybe(t, "dgp", "eps_sd", p.eps_sd);
  maybe(t, "dgp", "tau_mean", p.tau_mean);
  maybe(t, "dgp", "tau_sd", p.tau_sd);
  maybe(t, "dgp", "ws_k", p.ws_k);
  maybe(t, "dgp", "ws_p", p.ws_p);
  if (detail::has(t, "dgp", "gamma")) {
    const auto j = detail::get_json(t, "dgp", "gamma");
    if (!j.is_array() || j.size() != 4) throw ConfigError("config key 'dgp.gamma' must list 4 numbers");
    for (std::size_t k = 0; k < 4; ++k) p.gamma[k] = j[k].get<double>();
  }

  apply_gnn(t, c.gnn, c.sim.estimator);
  maybe(t, "simulation", "oracle_redraws", c.sim.oracle_redraws);
  if (detail::has(t, "simulation", "methods")) {
    const auto j = detail::get_json(t, "simulation", "methods");
    if (!j.is_array() || j.empty()) throw ConfigError("config key 'simulation.methods' must be a non-empty list");
    c.methods.clear();
    for (const auto& m : j) {
      try {
        c.methods.push_back(parse_method(m.get<std::string>()));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("config key 'simulation.methods': ") + e.what());
      }
    }
  }
  try {
    s.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline EstimateConfig estimate_config(const Tree& t) {
  detail::check_keys(t);
  EstimateConfig c;
  apply_gnn(t, c.gnn, c.estimator);
  apply_exposure(t, c.exposure);
  return c;
}

}  // namespace gmegnn::config
