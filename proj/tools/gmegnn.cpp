// gmegnn: simulation campaigns, effect estimation on CSV data, network
// generation and GCN gradient checks.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "gmegnn/commands.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kEstimation = 4 };

template <class F>
int guarded(F&& body) {
  using namespace gmegnn;
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const IndexError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const EstimationError& e) {
    std::cerr << "estimation failed: " << e.what() << "\n";
    return kEstimation;
  } catch (const TrainingError& e) {
    std::cerr << "estimation failed: " << e.what() << "\n";
    return kEstimation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  namespace cmd = gmegnn::commands;
  CLI::App app{"Doubly robust network-interference effects with GCN nuisances"};
  app.require_subcommand(1);

  std::size_t workers = 1;
  std::uint64_t seed = 0;

  cmd::SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "run a replication campaign from a scenario file");
  s->add_option("--scenario", sim.scenario, "scenario config file")->required()->check(CLI::ExistingFile);
  auto* sim_seed = s->add_option("--seed", seed, "base seed (overrides scenario.seed)")->envname("GMEGNN_SEED");
  s->add_option("--workers", workers, "concurrent replications")->envname("GMEGNN_WORKERS");
  s->add_option("--out-dir", sim.out_dir, "directory for summary.csv and raw.csv");
  s->add_flag("--full-scale", sim.full_scale, "100 groups and 1000 replications (hours)");

  cmd::EstimateArgs est;
  std::string exposure;
  double eta = 0.0;
  auto* e = app.add_subcommand("estimate", "estimate an exposure contrast from node/edge CSVs");
  e->add_option("--nodes", est.nodes, "node table")->required()->check(CLI::ExistingFile);
  e->add_option("--edges", est.edges, "edge table")->required()->check(CLI::ExistingFile);
  auto* e_cfg = e->add_option("--config", "config file with [gnn], [estimator], [exposure]")->check(CLI::ExistingFile);
  auto* e_exp = e->add_option("--exposure", exposure, "any-neighbor | joint4 | own | thresholds");
  e->add_option("--contrast", est.contrast, "levels t,t'")->capture_default_str();
  auto* e_eta = e->add_option("--eta", eta, "trimming threshold");
  e->add_option("--seed", seed, "GCN seed")->envname("GMEGNN_SEED");
  e->add_option("--method", est.method, "gme-gnn | gnn-only | mundlak")->capture_default_str();
  e->add_option("--workers", workers, "worker threads")->envname("GMEGNN_WORKERS");
  e->add_flag("--no-normalize", est.no_normalize, "report the unnormalized estimate");
  e->add_option("--out", est.out, "output JSON")->capture_default_str();

  cmd::GenNetworkArgs gen;
  auto* g = app.add_subcommand("gen-network", "write a Watts-Strogatz edge list");
  g->add_option("--n", gen.n, "nodes")->capture_default_str();
  g->add_option("--k", gen.k, "lattice degree (even)")->capture_default_str();
  g->add_option("--p", gen.p, "rewiring probability")->capture_default_str();
  g->add_option("--seed", seed, "seed")->envname("GMEGNN_SEED");
  g->add_option("--group", gen.group_id, "group_id column value")->capture_default_str();
  g->add_option("--out", gen.out, "output CSV")->capture_default_str();

  cmd::GradCheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "compare GCN gradients with finite differences");
  c->add_option("--instances", gc.instances, "random instances per loss")->capture_default_str();
  c->add_option("--seed", seed, "seed")->envname("GMEGNN_SEED");
  c->add_option("--step", gc.h, "finite-difference step")->capture_default_str();
  c->add_option("--tol", gc.tolerance, "max relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kConfig;
  }

  return guarded([&]() -> int {
    if (s->parsed()) {
      if (*sim_seed) sim.seed = seed;
      sim.workers = workers;
      std::cout << cmd::simulate(sim);
    } else if (e->parsed()) {
      if (*e_cfg) est.config = e_cfg->as<std::string>();
      if (*e_exp) est.exposure = exposure;
      if (*e_eta) est.eta = eta;
      est.seed = seed;
      est.workers = workers;
      std::cout << cmd::estimate(est);
    } else if (g->parsed()) {
      gen.seed = seed;
      std::cout << cmd::gen_network(gen);
    } else if (c->parsed()) {
      gc.seed = seed;
      const auto rep = cmd::gradcheck(gc);
      std::cout << rep.text;
      return rep.passed ? kOk : 1;
    }
    return kOk;
  });
}
