// Replication driver for the calibration benchmarks: runs a configured
// study, persists summaries/chains, and turns saved chains into
// plot-ready posterior density tables.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "orthocal/bench.hpp"

using namespace orthocal;

namespace {

int finish(const ExperimentResult& result, const ExperimentConfig& cfg) {
  std::cout << "replications: "
            << result.replications.size() - result.failures << " ok, "
            << result.failures << " failed\n";
  for (int j = 0; j < result.mean_posterior_mean.size(); ++j) {
    std::cout << "theta_" << j + 1
              << ": mean " << result.mean_posterior_mean[j]
              << ", sd " << result.mean_posterior_sd[j];
    if (result.coverage.size() > j)
      std::cout << ", coverage " << result.coverage[j];
    std::cout << "\n";
  }
  std::cout << "mean sampler time: " << result.mean_sampler_seconds << " s\n";
  int printed = 0;
  for (const auto& rep : result.replications)
    for (const auto& w : rep.warnings) {
      if (printed++ < 10)
        std::cerr << "warning (rep " << rep.replication << "): " << w.message
                  << "\n";
    }
  if (printed > 10)
    std::cerr << "... " << printed - 10 << " more warnings\n";
  return experiment_ok(result, cfg) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orthogonal calibration benchmark driver"};
  app.require_subcommand(1);

  // run: everything from a JSON config file
  std::string config_path;
  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("--config", config_path, "JSON config file")->required();

  // bench: the bundled studies from flags
  ExperimentConfig cfg;
  std::string model = "model1", prior = "gp", projection = "functional";
  auto* bench = app.add_subcommand("bench", "run a bundled benchmark study");
  bench->add_option("--model", model, "model1|model2|model3|bivariate");
  bench->add_option("--prior", prior, "gp|basis|ogp");
  bench->add_option("--projection", projection, "functional|finite_dim|moment");
  bench->add_option("--reps", cfg.replications, "replication count");
  bench->add_option("--seed", cfg.seed, "base seed");
  bench->add_option("--n", cfg.n, "field observations per replication");
  bench->add_option("--sigma", cfg.sigma, "noise SD (univariate generators)");
  bench->add_option("--iters", cfg.iterations, "MCMC iterations");
  bench->add_option("--burnin", cfg.burnin, "burn-in iterations");
  bench->add_option("--quad", cfg.quadrature_points, "quadrature points per axis");
  bench->add_option("--threads", cfg.threads, "worker cap (0 = auto)");
  bench->add_option("--out", cfg.output_dir, "output directory")->required();
  bench->add_flag("--diagnostics", cfg.diagnostics,
                  "write per-iteration projection reports");

  // density: KDE table from a stored chain
  std::string chain_path, density_out;
  int grid_size = 512;
  auto* density = app.add_subcommand("density", "posterior density from a chain CSV");
  density->add_option("--chain", chain_path, "chain CSV")->required();
  density->add_option("--out", density_out, "output CSV")->required();
  density->add_option("--grid", grid_size, "grid size");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ExperimentConfig file_cfg = config_from_json_file(config_path);
      return finish(run_experiment(file_cfg), file_cfg);
    }
    if (bench->parsed()) {
      cfg.model = parse_model_id(model);
      cfg.prior = parse_prior_kind(prior);
      cfg.projection = parse_projection_method(projection);
      cfg.validate();
      return finish(run_experiment(cfg), cfg);
    }
    if (density->parsed()) {
      Chain chain = read_chain_csv(chain_path);
      if (chain.length() == 0) throw ConfigError("density: empty chain");
      for (int j = 0; j < chain.params(); ++j) {
        MatrixXd dens = emit_density_data(chain.theta.col(j), grid_size);
        std::string path = density_out;
        if (chain.params() > 1) {
          auto dot = path.rfind(".csv");
          std::string stem = dot == std::string::npos ? path : path.substr(0, dot);
          path = stem + "_theta_" + std::to_string(j + 1) + ".csv";
        }
        std::ofstream out(path);
        if (!out) throw ConfigError("density: cannot open " + path);
        out << "theta,density\n";
        out.precision(12);
        for (int g = 0; g < dens.rows(); ++g)
          out << dens(g, 0) << ',' << dens(g, 1) << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
