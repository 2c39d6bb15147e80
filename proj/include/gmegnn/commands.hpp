#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gmegnn/baselines.hpp"
#include "gmegnn/config.hpp"
#include "gmegnn/drestimator.hpp"
#include "gmegnn/gradcheck.hpp"
#include "gmegnn/io.hpp"
#include "gmegnn/netgraph.hpp"
#include "gmegnn/simlab.hpp"

// Command bodies behind the gmegnn executable. Each returns the text it
// would print and writes its files atomically.
namespace gmegnn::commands {

using Json = nlohmann::ordered_json;

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::filesystem::path scenario;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::filesystem::path out_dir = ".";
  bool full_scale = false;  // M = 100 groups, 1000 replications
};

inline std::string summary_csv(const ScenarioResult& r) {
  std::ostringstream os;
  os << "method,n_ok,n_failed,mae,mse,rmse,coverage\n";
  for (const auto& s : r.summaries) {
    os << to_string(s.method) << ',' << s.n_ok << ',' << s.n_failed << ','
       << io::format_double(s.mae) << ',' << io::format_double(s.mse) << ','
       << io::format_double(s.rmse) << ','
       << (std::isfinite(s.coverage) ? io::format_double(s.coverage) : "NA") << '\n';
  }
  return os.str();
}

inline std::string raw_csv(const ScenarioResult& r) {
  std::ostringstream os;
  os << "rep_index,method,tau_hat,tau_star,se,b_bar,status\n";
  auto cell = [](double v) { return std::isfinite(v) ? io::format_double(v) : std::string("NA"); };
  for (const auto& row : r.rows) {
    std::string status = "ok";
    if (!row.ok) {
      status = "failed: " + row.error;
      for (char& ch : status)
        if (ch == ',' || ch == '\n') ch = ';';
    }
    os << row.rep_index << ',' << to_string(row.method) << ',' << cell(row.tau_hat) << ','
       << cell(row.tau_star) << ',' << cell(row.se) << ',' << cell(row.b_bar) << ',' << status
       << '\n';
  }
  return os.str();
}

inline std::string summary_table(const ScenarioResult& r) {
  std::ostringstream os;
  const auto& sc = r.scenario;
  os << "scenario " << sc.name() << ": M=" << sc.M << ", N_g in [" << sc.ng_min << ", "
     << sc.ng_max << "], " << sc.replications << " replications, seed " << sc.base_seed << "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %9s\n", "method", "MAE", "MSE", "RMSE",
                "coverage");
  os << line;
  std::size_t failed = 0;
  for (const auto& s : r.summaries) {
    std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %9s\n", to_string(s.method).c_str(),
                  fixed(s.mae, 4).c_str(), fixed(s.mse, 4).c_str(), fixed(s.rmse, 4).c_str(),
                  fixed(s.coverage, 3).c_str());
    os << line;
    failed += s.n_failed;
  }
  if (failed > 0) {
    os << "failed replications:";
    for (const auto& s : r.summaries)
      if (s.n_failed) os << ' ' << to_string(s.method) << '=' << s.n_failed;
    os << " (excluded from the metrics; see raw.csv)\n";
  }
  return os.str();
}

inline std::string simulate(const SimulateArgs& a) {
  auto cfg = config::simulate_config(config::load_ini(a.scenario));
  if (a.seed) cfg.scenario.base_seed = *a.seed;
  if (a.full_scale) {
    cfg.scenario.M = 100;
    cfg.scenario.replications = 1000;
  }
  cfg.sim.workers = a.workers;
  const auto result = run_scenario(cfg.scenario, cfg.methods, cfg.gnn, cfg.sim);
  std::filesystem::create_directories(a.out_dir);
  io::write_file_atomic(a.out_dir / "summary.csv", summary_csv(result));
  io::write_file_atomic(a.out_dir / "raw.csv", raw_csv(result));
  return summary_table(result);
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::filesystem::path nodes;
  std::filesystem::path edges;
  std::optional<std::filesystem::path> config;
  std::optional<std::string> exposure;
  std::string contrast = "1,0";
  std::optional<double> eta;
  std::uint64_t seed = 0;
  std::string method = "gme-gnn";
  std::size_t workers = 1;
  bool no_normalize = false;
  std::filesystem::path out = "effect.json";
};

inline Contrast parse_contrast(const std::string& s) {
  const auto cells = io::split_csv_line(s);
  if (cells.size() != 2) throw ConfigError("--contrast expects t,t' (got '" + s + "')");
  try {
    return {static_cast<int>(io::parse_int(cells[0], "--contrast")),
            static_cast<int>(io::parse_int(cells[1], "--contrast"))};
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

inline Json effect_json(const EffectEstimate& e, const ExposureSpec& spec, std::uint64_t seed) {
  Json j;
  j["method"] = e.method;
  j["exposure"] = to_string(spec.mapping);
  j["contrast"] = {e.contrast.t, e.contrast.t_prime};
  j["seed"] = seed;
  j["tau_hat"] = number(e.tau_hat);
  j["tau_hat_raw"] = number(e.tau_hat_raw);
  j["tau_hat_normalized"] = number(e.tau_hat_normalized);
  j["normalized"] = e.normalized;
  j["sigma2_hat"] = number(e.sigma2_hat);
  j["raw_sigma2"] = number(e.raw_sigma2);
  j["variance_floored"] = e.variance_floored;
  j["std_error"] = number(e.std_error);
  j["ci95"] = {number(e.ci95.first), number(e.ci95.second)};
  j["b_bar"] = number(e.b_bar);
  j["per_group_tau"] = Json::array();
  for (double v : e.per_group_tau) j["per_group_tau"].push_back(number(v));
  Json groups = Json::array();
  for (const auto& g : e.groups) {
    Json d;
    d["group_id"] = g.group_id;
    d["n"] = g.n;
    d["n_overlap"] = g.n_overlap;
    d["tau_g"] = number(g.tau_g);
    d["b_g"] = g.bandwidth.b;
    d["branch"] = to_string(g.bandwidth.branch);
    d["group_hac_contribution"] = number(g.hac_contribution);
    d["negative_flag"] = g.negative_flag;
    d["warnings"] = g.warnings;
    groups.push_back(std::move(d));
  }
  j["groups"] = std::move(groups);
  return j;
}

inline Json mundlak_json(const MundlakResult& r) {
  Json j;
  j["method"] = "mundlak";
  j["tau_hat"] = number(r.tau_hat);
  Json coef;
  for (std::size_t k = 0; k < r.fit.column_names.size(); ++k)
    coef[r.fit.column_names[k]] = number(r.fit.coefficients(static_cast<Eigen::Index>(k)));
  j["coefficients"] = std::move(coef);
  j["residual_variance"] = number(r.fit.residual_variance);
  j["warnings"] = r.fit.warnings;
  return j;
}

// Everything that can fail on bad input is parsed before any fitting.
inline std::string estimate(const EstimateArgs& a) {
  config::EstimateConfig cfg;
  if (a.config) cfg = config::estimate_config(config::load_ini(*a.config));
  if (a.exposure) {
    try {
      cfg.exposure.mapping = parse_exposure_mapping(*a.exposure);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }
  if (a.eta) cfg.estimator.eta = *a.eta;
  if (a.no_normalize) cfg.estimator.normalize = false;
  cfg.estimator.workers = a.workers;
  cfg.gnn.seed = a.seed;
  const Contrast c = parse_contrast(a.contrast);
  if (a.method != "gme-gnn" && a.method != "gnn-only" && a.method != "mundlak") {
    throw ConfigError("--method must be gme-gnn, gnn-only or mundlak (got '" + a.method + "')");
  }
  try {
    cfg.estimator.validate();
    cfg.gnn.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  const GroupedPopulation pop = io::read_population(a.nodes, a.edges);

  Json j;
  std::ostringstream msg;
  if (a.method == "mundlak") {
    const auto r = mundlak_ols(pop);
    j = mundlak_json(r);
    msg << "mundlak: tau_hat = " << fixed(r.tau_hat, 6) << "\n";
  } else {
    const auto est = dr_gnn_estimate(pop, cfg.exposure, c, cfg.gnn, cfg.estimator,
                                     a.method == "gme-gnn");
    j = effect_json(est, cfg.exposure, a.seed);
    msg << est.method << ": tau_hat = " << fixed(est.tau_hat, 6) << " (se "
        << fixed(est.std_error, 6) << ", 95% CI [" << fixed(est.ci95.first, 6) << ", "
        << fixed(est.ci95.second, 6) << "], b_bar " << fixed(est.b_bar, 4) << ")\n";
  }
  io::write_file_atomic(a.out, j.dump(2) + "\n");
  return msg.str();
}

// ------------------------------------------------------------- gen-network

struct GenNetworkArgs {
  std::size_t n = 50;
  std::size_t k = 4;
  double p = 0.1;
  std::uint64_t seed = 0;
  std::string group_id = "g0";
  std::filesystem::path out = "edges.csv";
};

inline std::string stats_line(const Graph& g) {
  const auto s = graph_stats(g);
  std::ostringstream os;
  os << "nodes " << g.n_nodes() << ", edges " << g.n_edges() << ", avg degree "
     << fixed(s.avg_degree, 2) << ", avg path length "
     << (s.avg_path_length ? fixed(*s.avg_path_length, 4) : std::string("NA")) << "\n";
  return os.str();
}

inline std::string gen_network(const GenNetworkArgs& a) {
  const Graph g = ws_generate(a.n, a.k, a.p, a.seed);
  io::write_file_atomic(a.out, io::edges_csv(g, a.group_id));
  return stats_line(g);
}

// --------------------------------------------------------------- gradcheck

struct GradCheckArgs {
  std::size_t instances = 20;
  std::uint64_t seed = 0;
  double h = 1e-5;
  double tolerance = 1e-4;
};

struct GradCheckReport {
  std::string text;
  bool passed = true;
};

inline GradCheckReport gradcheck(const GradCheckArgs& a) {
  GradCheckReport rep;
  std::ostringstream os;
  for (Task task : {Task::regression, Task::binary}) {
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    for (std::size_t i = 0; i < a.instances; ++i) {
      const auto inst = random_instance(task, derive_seed(a.seed, {static_cast<std::uint64_t>(task), i}));
      const auto r = check_gradient(inst.model, inst.adj, inst.x, inst.y, inst.mask, &inst.dropout, a.h);
      worst = std::max(worst, r.max_rel_error);
      checked += r.n_checked;
      skipped += r.n_skipped;
    }
    const bool ok = worst < a.tolerance;
    rep.passed = rep.passed && ok;
    char line[200];
    std::snprintf(line, sizeof line,
                  "%-10s instances %zu, coordinates %zu (skipped %zu), max rel error %.3e %s\n",
                  task == Task::regression ? "regression" : "binary", a.instances, checked,
                  skipped, worst, ok ? "ok" : "FAIL");
    os << line;
  }
  rep.text = os.str();
  return rep;
}

}  // namespace gmegnn::commands
