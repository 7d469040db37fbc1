#pragma once

#include <optional>
#include <string>

#include "orthocal/calibrate.hpp"
#include "orthocal/emulator.hpp"
#include "orthocal/models.hpp"

namespace orthocal {

enum class ModelId { model1, model2, model3, bivariate, custom_runtable };
enum class PriorKind { gp, basis, ogp };

std::string to_string(ModelId id);
std::string to_string(PriorKind k);
std::string to_string(ProjectionMethod m);
ModelId parse_model_id(const std::string& s);
PriorKind parse_prior_kind(const std::string& s);
ProjectionMethod parse_projection_method(const std::string& s);

struct ExperimentConfig {
  ModelId model = ModelId::model1;
  PriorKind prior = PriorKind::gp;
  ProjectionMethod projection = ProjectionMethod::functional;

  int n = 100;
  double sigma = 0.2;        // iid noise SD for q = 1 generators
  MatrixXd sigma_matrix;     // optional q x q override (bivariate)
  int iterations = 5000;
  int burnin = 1000;
  int replications = 100;
  std::uint64_t seed = 1;
  int quadrature_points = 32;

  double matern_psi = 0.5;
  double prior_gamma = 10.0;
  int basis_size = 12;
  double basis_tau2 = 1.0;
  double holdout_fraction = 0.1;
  MomentConstraintMode moment_mode = MomentConstraintMode::quadrature;

  std::string run_table_path;  // custom_runtable: simulator evaluations
  std::string field_path;      // custom_runtable: observations CSV

  std::string output_dir;
  int threads = 0;  // 0: ORTHOCAL_THREADS or hardware concurrency
  bool diagnostics = false;
  Severity warning_threshold = Severity::severe;

  void validate() const;
  // Stable over semantically meaningful fields only (outputs, threading and
  // diagnostics toggles excluded).
  std::uint64_t digest() const;
};

ExperimentConfig config_from_json_file(const std::string& path);

// A generated study instance: data, simulator, target.
struct Benchmark {
  FieldObservations field;
  ComputerModel model;
  std::function<VectorXd(const VectorXd&)> truth;
  VectorXd theta_star;
  NoiseModel noise;
  Box x_domain;
  std::optional<RunTable> runs;  // model3 only
};

Benchmark generate_benchmark(ModelId id, int n, const NoiseModel& noise,
                             Rng& rng);

// Extract outcome k (0-based) of a multi-output simulator.
ComputerModel component_model(const ComputerModel& m, int k);

// One named calibration fit inside a replication.
struct ArmResult {
  std::string arm;  // "joint", "uni1", ...
  VectorXd theta_tilde;
  PosteriorSummary summary;
  std::vector<int> covered;  // per coordinate; empty when theta* unknown
  Chain chain;               // theta draws and diagnostics
  double sampler_seconds = 0.0;
};

struct ReplicationResult {
  int replication = 0;
  bool failed = false;
  std::string error;
  std::vector<ArmResult> arms;  // primary fit first
  WarningList warnings;
};

struct ExperimentResult {
  std::uint64_t config_digest = 0;
  std::vector<ReplicationResult> replications;
  int failures = 0;
  WarningList warnings;

  // aggregate over successful replications, primary arm
  VectorXd mean_posterior_mean;
  VectorXd mean_posterior_sd;
  VectorXd coverage;  // empty when theta* unknown
  double mean_sampler_seconds = 0.0;
};

// Full per-replication pipeline: generate data, fit the surrogate when the
// simulator is table-defined, estimate the noise plug-in and the anchor,
// whiten, build constraints, sample, summarize.
ReplicationResult run_replication(const ExperimentConfig& cfg, int replication);

// Replications in a worker pool, aggregated in replication order.
// More than 10% failed replications aborts with ExperimentError.
ExperimentResult coverage_experiment(const ExperimentConfig& cfg,
                                     int replications, std::uint64_t seed);

// coverage_experiment plus output files (summary.json, table.csv,
// chain_<r>.csv, density_*.csv) under cfg.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Gaussian KDE with Silverman bandwidth on a uniform grid; column 0 holds
// grid points, column 1 densities.
MatrixXd emit_density_data(const VectorXd& draws, int grid_size);

void write_chain_csv(const Chain& chain, const std::string& path);
Chain read_chain_csv(const std::string& path);

// true when nothing failed and no warning reaches the configured severity
bool experiment_ok(const ExperimentResult& result, const ExperimentConfig& cfg);

}  // namespace orthocal
