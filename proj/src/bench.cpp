#include "orthocal/bench.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace orthocal {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ModelId id) {
  switch (id) {
    case ModelId::model1: return "model1";
    case ModelId::model2: return "model2";
    case ModelId::model3: return "model3";
    case ModelId::bivariate: return "bivariate";
    case ModelId::custom_runtable: return "custom-runtable";
  }
  return "?";
}

std::string to_string(PriorKind k) {
  switch (k) {
    case PriorKind::gp: return "gp";
    case PriorKind::basis: return "basis";
    case PriorKind::ogp: return "ogp";
  }
  return "?";
}

std::string to_string(ProjectionMethod m) {
  switch (m) {
    case ProjectionMethod::functional: return "functional";
    case ProjectionMethod::finite_dim: return "finite_dim";
    case ProjectionMethod::moment: return "moment";
  }
  return "?";
}

ModelId parse_model_id(const std::string& s) {
  if (s == "model1") return ModelId::model1;
  if (s == "model2") return ModelId::model2;
  if (s == "model3") return ModelId::model3;
  if (s == "bivariate") return ModelId::bivariate;
  if (s == "custom-runtable" || s == "custom_runtable")
    return ModelId::custom_runtable;
  throw ConfigError("unknown model id: " + s);
}

PriorKind parse_prior_kind(const std::string& s) {
  if (s == "gp") return PriorKind::gp;
  if (s == "basis") return PriorKind::basis;
  if (s == "ogp") return PriorKind::ogp;
  throw ConfigError("unknown prior: " + s);
}

ProjectionMethod parse_projection_method(const std::string& s) {
  if (s == "functional") return ProjectionMethod::functional;
  if (s == "finite_dim" || s == "finite-dim") return ProjectionMethod::finite_dim;
  if (s == "moment") return ProjectionMethod::moment;
  throw ConfigError("unknown projection method: " + s);
}

void ExperimentConfig::validate() const {
  if (n < 1 || iterations < 1 || replications < 1 || quadrature_points < 2)
    throw ConfigError("config: numeric fields must be positive");
  if (burnin < 0 || burnin >= iterations)
    throw ConfigError("config: need 0 <= burnin < iterations");
  if (sigma < 0.0) throw ConfigError("config: sigma must be >= 0");
  if (matern_psi <= 0.0 || prior_gamma <= 0.0 || basis_tau2 <= 0.0)
    throw ConfigError("config: prior hyperparameters must be positive");
  if (basis_size < 4) throw ConfigError("config: basis_size must be >= 4");
  if (holdout_fraction < 0.0 || holdout_fraction > 0.5)
    throw ConfigError("config: holdout_fraction must be in [0, 0.5]");
  if (model == ModelId::custom_runtable &&
      (run_table_path.empty() || field_path.empty()))
    throw ConfigError(
        "config: custom-runtable needs run_table_path and field_path");
  if (model == ModelId::custom_runtable || model == ModelId::model3) {
    // surrogate-backed models have finite-difference gradients only; every
    // prior/projection combination is still supported
  }
  if (sigma_matrix.size() > 0 && sigma_matrix.rows() != sigma_matrix.cols())
    throw ConfigError("config: sigma_matrix must be square");
}

std::uint64_t ExperimentConfig::digest() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << to_string(model) << '|' << to_string(prior) << '|'
     << to_string(projection) << '|' << n << '|' << sigma << '|' << iterations
     << '|' << burnin << '|' << replications << '|' << seed << '|'
     << quadrature_points << '|' << matern_psi << '|' << prior_gamma << '|'
     << basis_size << '|' << basis_tau2 << '|' << holdout_fraction << '|'
     << (moment_mode == MomentConstraintMode::quadrature ? "quad" : "design")
     << '|' << run_table_path << '|' << field_path << '|';
  for (int i = 0; i < sigma_matrix.rows(); ++i)
    for (int j = 0; j < sigma_matrix.cols(); ++j)
      ss << sigma_matrix(i, j) << ',';
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : ss.str()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

ExperimentConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  if (j.contains("model")) cfg.model = parse_model_id(j["model"]);
  if (j.contains("prior")) cfg.prior = parse_prior_kind(j["prior"]);
  if (j.contains("projection"))
    cfg.projection = parse_projection_method(j["projection"]);
  if (j.contains("n")) cfg.n = j["n"];
  if (j.contains("sigma")) cfg.sigma = j["sigma"];
  if (j.contains("Sigma")) {
    auto rows = j["Sigma"];
    int q = static_cast<int>(rows.size());
    cfg.sigma_matrix.resize(q, q);
    for (int r = 0; r < q; ++r)
      for (int c = 0; c < q; ++c) cfg.sigma_matrix(r, c) = rows[r][c];
  }
  if (j.contains("iterations")) cfg.iterations = j["iterations"];
  if (j.contains("burnin")) cfg.burnin = j["burnin"];
  if (j.contains("replications")) cfg.replications = j["replications"];
  if (j.contains("seed")) cfg.seed = j["seed"];
  if (j.contains("quadrature_points"))
    cfg.quadrature_points = j["quadrature_points"];
  if (j.contains("matern_psi")) cfg.matern_psi = j["matern_psi"];
  if (j.contains("prior_gamma")) cfg.prior_gamma = j["prior_gamma"];
  if (j.contains("basis_size")) cfg.basis_size = j["basis_size"];
  if (j.contains("basis_tau2")) cfg.basis_tau2 = j["basis_tau2"];
  if (j.contains("holdout_fraction"))
    cfg.holdout_fraction = j["holdout_fraction"];
  if (j.contains("moment_mode"))
    cfg.moment_mode = j["moment_mode"] == "design"
                          ? MomentConstraintMode::design
                          : MomentConstraintMode::quadrature;
  if (j.contains("run_table")) cfg.run_table_path = j["run_table"];
  if (j.contains("field")) cfg.field_path = j["field"];
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"];
  if (j.contains("threads")) cfg.threads = j["threads"];
  if (j.contains("diagnostics")) cfg.diagnostics = j["diagnostics"];
  if (j.contains("warning_threshold")) {
    std::string w = j["warning_threshold"];
    cfg.warning_threshold = w == "info"      ? Severity::info
                            : w == "warning" ? Severity::warning
                                             : Severity::severe;
  }
  cfg.validate();
  return cfg;
}

Benchmark generate_benchmark(ModelId id, int n, const NoiseModel& noise,
                             Rng& rng) {
  ReferenceProblem ref;
  switch (id) {
    case ModelId::model1: ref = model1(); break;
    case ModelId::model2:
    case ModelId::model3: ref = model2(); break;
    case ModelId::bivariate: ref = bivariate_pair(); break;
    default:
      throw ConfigError("generate_benchmark: no bundled generator for " +
                        to_string(id));
  }
  if (noise.outcomes() != ref.model.outputs)
    throw DimensionError("generate_benchmark: noise dimension mismatch");

  Benchmark bm;
  bm.x_domain = ref.x_domain;
  bm.model = ref.model;
  bm.truth = ref.truth;
  bm.theta_star = ref.theta_star;
  bm.noise = noise;
  Design design = uniform_design(n, ref.x_domain, rng);
  bm.field = sample_field_data(ref.truth, noise, design, rng);

  if (id == ModelId::model3) {
    // simulator evaluations on a 7 x 7 parameter grid at the design points
    const int grid = 7;
    const Box& theta = ref.model.theta_domain;
    std::vector<VectorXd> thetas;
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j) {
        VectorXd t(2);
        t[0] = theta.lo[0] + theta.width(0) * i / (grid - 1.0);
        t[1] = theta.lo[1] + theta.width(1) * j / (grid - 1.0);
        thetas.push_back(t);
      }
    const int rows = static_cast<int>(thetas.size()) * n;
    MatrixXd inputs(rows, 2 + design.dim());
    MatrixXd outputs(rows, 1);
    int r = 0;
    for (const auto& t : thetas) {
      for (int i = 0; i < n; ++i, ++r) {
        inputs(r, 0) = t[0];
        inputs(r, 1) = t[1];
        inputs.block(r, 2, 1, design.dim()) = design.points.row(i);
        outputs(r, 0) =
            ref.model.eval(design.points.row(i).transpose(), t)[0];
      }
    }
    bm.runs = RunTable(std::move(inputs), std::move(outputs), 2, design.dim());
  }
  return bm;
}

ComputerModel component_model(const ComputerModel& m, int k) {
  if (k < 0 || k >= m.outputs)
    throw DimensionError("component_model: outcome index out of range");
  MatrixXd selector = MatrixXd::Zero(1, m.outputs);
  selector(0, k) = 1.0;
  return transformed_model(m, selector);
}

namespace {

FieldObservations read_field_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open field file " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("field file is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  int d = 0, q = 0;
  for (const auto& h : header) {
    if (h.rfind("x_", 0) == 0) ++d;
    else if (h.rfind("y_", 0) == 0) ++q;
    else throw ConfigError("field file: unexpected column " + h);
  }
  if (d < 1 || q < 1) throw ConfigError("field file: need x_* and y_* columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> row;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    if (static_cast<int>(row.size()) != d + q)
      throw ConfigError("field file: ragged row");
    rows.push_back(std::move(row));
  }
  MatrixXd x(rows.size(), d), y(rows.size(), q);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < d; ++c) x(i, c) = rows[i][c];
    for (int c = 0; c < q; ++c) y(i, c) = rows[i][d + c];
  }
  VectorXd lo = x.colwise().minCoeff();
  VectorXd hi = x.colwise().maxCoeff();
  for (int c = 0; c < d; ++c) {
    double pad = 1e-9 * std::max(1.0, hi[c] - lo[c]);
    lo[c] -= pad;
    hi[c] += pad;
  }
  return FieldObservations(Design(std::move(x), Box(lo, hi)), std::move(y));
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ORTHOCAL_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

BiasPriorPtr make_bias_prior(const ExperimentConfig& cfg, const Design& design,
                             const QuadratureRulePtr& rule,
                             const ConstraintSet& cs, int q,
                             WarningList* warnings) {
  // sampling happens in whitened coordinates: unit noise, unit plug-in
  // signal variance
  VectorXd unit_noise = VectorXd::Ones(q);
  switch (cfg.prior) {
    case PriorKind::gp: {
      MaternKernel kernel(1.0, cfg.matern_psi);
      return std::make_shared<GpBiasPrior>(
          design, rule, std::vector<CovarianceFn>(q, CovarianceFn(kernel)),
          unit_noise);
    }
    case PriorKind::basis:
      return std::make_shared<BasisExpansionPrior>(
          design, rule, cfg.basis_size, cfg.basis_tau2, unit_noise, warnings);
    case PriorKind::ogp: {
      MaternKernel kernel(1.0, cfg.matern_psi);
      std::vector<CovarianceFn> covs;
      covs.reserve(q);
      for (int k = 0; k < q; ++k)
        covs.push_back(ogp_kernel(kernel, cs, rule, k, warnings));
      return std::make_shared<GpBiasPrior>(design, rule, covs, unit_noise);
    }
  }
  throw ConfigError("unknown prior kind");
}

ArmResult calibrate_arm(const ExperimentConfig& cfg, const std::string& name,
                        const FieldObservations& field, const ComputerModel& m,
                        const Box& x_domain, const VectorXd* theta_star,
                        Rng& rng, WarningList* warnings) {
  ArmResult arm;
  arm.arm = name;
  const int q = field.outcomes();

  NoiseModel sigma_hat = estimate_noise_covariance(field);
  arm.theta_tilde = estimate_anchor(field, m, rng);

  MatrixXd W = sigma_hat.inv_sqrt();
  FieldObservations field_w(field.design, MatrixXd(field.values * W));
  ComputerModel model_w = transformed_model(m, W);

  auto rule = gauss_legendre_rule(cfg.quadrature_points, x_domain);
  ConstraintSet cs =
      build_constraint_set(model_w, arm.theta_tilde, rule, field.design, warnings);

  BiasPriorPtr prior = make_bias_prior(cfg, field.design, rule, cs, q, warnings);
  ThetaPrior theta_prior(cfg.prior_gamma, m.theta_domain);

  SamplerOptions sopts;
  sopts.iterations = cfg.iterations;
  sopts.burnin = cfg.burnin;
  sopts.projection = cfg.projection;
  sopts.moment_mode = cfg.moment_mode;

  auto t0 = std::chrono::steady_clock::now();
  arm.chain = run_projection_sampler(field_w, model_w, *prior, theta_prior, cs,
                                     NoiseModel::iid(1.0, q), sopts, rng);
  arm.sampler_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  arm.summary = summarize_chain(arm.chain);
  for (const auto& w : arm.chain.warnings) warnings->push_back(w);
  for (const auto& w : arm.summary.warnings) warnings->push_back(w);

  if (theta_star) {
    arm.covered.resize(theta_star->size());
    for (int j = 0; j < theta_star->size(); ++j)
      arm.covered[j] = ((*theta_star)[j] >= arm.summary.ci_lower[j] &&
                        (*theta_star)[j] <= arm.summary.ci_upper[j])
                           ? 1
                           : 0;
  }
  return arm;
}

}  // namespace

ReplicationResult run_replication(const ExperimentConfig& cfg,
                                  int replication) {
  cfg.validate();
  ReplicationResult result;
  result.replication = replication;
  Rng rng = make_rng(substream_seed(cfg.seed, replication));

  if (cfg.model == ModelId::custom_runtable) {
    FieldObservations field = read_field_csv(cfg.field_path);
    RunTable runs = read_run_table_csv(cfg.run_table_path);
    SurrogateFitOptions fopts;
    fopts.seed = substream_seed(cfg.seed, 1000003 + replication);
    auto surrogate =
        fit_surrogate(runs, cfg.holdout_fraction, fopts, &result.warnings);
    Box theta_domain = surrogate->training_theta_box();
    ComputerModel m =
        surrogate_as_model(surrogate, theta_domain, &result.warnings);
    result.arms.push_back(calibrate_arm(cfg, "fit", field, m,
                                        field.design.domain, nullptr, rng,
                                        &result.warnings));
    return result;
  }

  NoiseModel gen_noise =
      cfg.sigma_matrix.size() > 0
          ? NoiseModel(cfg.sigma_matrix)
          : (cfg.model == ModelId::bivariate
                 ? NoiseModel(bivariate_pair().default_noise)
                 : NoiseModel::iid(cfg.sigma * cfg.sigma, 1));
  Benchmark bm = generate_benchmark(cfg.model, cfg.n, gen_noise, rng);

  ComputerModel calibration_model = bm.model;
  if (cfg.model == ModelId::model3) {
    SurrogateFitOptions fopts;
    fopts.seed = substream_seed(cfg.seed, 1000003 + replication);
    auto surrogate = fit_surrogate(*bm.runs, cfg.holdout_fraction, fopts,
                                   &result.warnings);
    calibration_model = surrogate_as_model(surrogate, bm.model.theta_domain,
                                           &result.warnings);
  }

  if (cfg.model == ModelId::bivariate) {
    result.arms.push_back(calibrate_arm(cfg, "joint", bm.field,
                                        calibration_model, bm.x_domain,
                                        &bm.theta_star, rng, &result.warnings));
    for (int k = 0; k < 2; ++k) {
      FieldObservations field_k(bm.field.design,
                                MatrixXd(bm.field.values.col(k)));
      ComputerModel m_k = component_model(calibration_model, k);
      result.arms.push_back(
          calibrate_arm(cfg, k == 0 ? "uni1" : "uni2", field_k, m_k,
                        bm.x_domain, &bm.theta_star, rng, &result.warnings));
    }
  } else {
    result.arms.push_back(calibrate_arm(cfg, "fit", bm.field,
                                        calibration_model, bm.x_domain,
                                        &bm.theta_star, rng, &result.warnings));
  }
  return result;
}

ExperimentResult coverage_experiment(const ExperimentConfig& cfg,
                                     int replications, std::uint64_t seed) {
  if (replications < 1)
    throw ContractError("coverage_experiment: need at least 1 replication");
  ExperimentConfig local = cfg;
  local.replications = replications;
  local.seed = seed;
  local.validate();

  ExperimentResult result;
  result.config_digest = local.digest();
  result.replications.resize(replications);

  const int threads =
      std::min(resolve_threads(local.threads), replications);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int r = next.fetch_add(1);
      if (r >= replications) return;
      try {
        result.replications[r] = run_replication(local, r);
      } catch (const std::exception& e) {
        result.replications[r].replication = r;
        result.replications[r].failed = true;
        result.replications[r].error = e.what();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  int p = 0;
  for (const auto& rep : result.replications) {
    if (rep.failed) {
      ++result.failures;
      warn(&result.warnings, Severity::severe,
           "replication " + std::to_string(rep.replication) +
               " failed: " + rep.error);
      continue;
    }
    p = rep.arms.front().summary.mean.size();
  }
  if (result.failures * 10 > replications)
    throw ExperimentError("coverage_experiment: more than 10% of replications failed");
  int ok = replications - result.failures;
  if (ok == 0) throw ExperimentError("coverage_experiment: nothing succeeded");

  result.mean_posterior_mean = VectorXd::Zero(p);
  result.mean_posterior_sd = VectorXd::Zero(p);
  VectorXd cov_counts = VectorXd::Zero(p);
  bool have_coverage = true;
  for (const auto& rep : result.replications) {
    if (rep.failed) continue;
    const auto& arm = rep.arms.front();
    result.mean_posterior_mean += arm.summary.mean;
    result.mean_posterior_sd += arm.summary.sd;
    result.mean_sampler_seconds += arm.sampler_seconds;
    if (arm.covered.empty()) {
      have_coverage = false;
    } else {
      for (int j = 0; j < p; ++j) cov_counts[j] += arm.covered[j];
    }
  }
  result.mean_posterior_mean /= ok;
  result.mean_posterior_sd /= ok;
  result.mean_sampler_seconds /= ok;
  if (have_coverage) result.coverage = cov_counts / ok;
  return result;
}

MatrixXd emit_density_data(const VectorXd& draws, int grid_size) {
  const long n = draws.size();
  if (n < 1) throw ContractError("emit_density_data: empty chain");
  if (grid_size < 2) throw ContractError("emit_density_data: grid too small");

  double mean = draws.mean();
  double sd = n > 1 ? std::sqrt((draws.array() - mean).square().sum() / (n - 1))
                    : 0.0;
  std::vector<double> sorted(draws.data(), draws.data() + n);
  std::sort(sorted.begin(), sorted.end());
  double q1 = sorted[static_cast<size_t>(0.25 * (n - 1))];
  double q3 = sorted[static_cast<size_t>(0.75 * (n - 1))];
  double spread = std::min(sd, (q3 - q1) / 1.34);
  if (spread <= 0.0) spread = sd;
  double bw = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  if (!(bw > 0.0)) bw = 1e-9 + 1e-6 * std::abs(mean);  // point mass

  double lo = sorted.front() - 3.0 * bw;
  double hi = sorted.back() + 3.0 * bw;
  MatrixXd out(grid_size, 2);
  const double norm_const = 1.0 / (n * bw * std::sqrt(2.0 * M_PI));
  for (int g = 0; g < grid_size; ++g) {
    double x = lo + (hi - lo) * g / (grid_size - 1.0);
    double dens = 0.0;
    for (long i = 0; i < n; ++i) {
      double z = (x - draws[i]) / bw;
      dens += std::exp(-0.5 * z * z);
    }
    out(g, 0) = x;
    out(g, 1) = dens * norm_const;
  }
  return out;
}

void write_chain_csv(const Chain& chain, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_chain_csv: cannot open " + path);
  out << "iter";
  for (int j = 0; j < chain.params(); ++j) out << ",theta_" << j + 1;
  out << ",loglik,accept,max_constraint_residual\n";
  out.precision(17);
  for (long i = 0; i < chain.length(); ++i) {
    out << i;
    for (int j = 0; j < chain.params(); ++j) out << ',' << chain.theta(i, j);
    out << ',' << chain.loglik[i] << ',' << int(chain.accepted[i]) << ','
        << chain.constraint_residual[i] << "\n";
  }
}

Chain read_chain_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("read_chain_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("read_chain_csv: empty file");
  int cols = 1;
  for (char c : line) cols += c == ',';
  int p = cols - 4;
  if (p < 1) throw ConfigError("read_chain_csv: malformed header");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> row;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    if (static_cast<int>(row.size()) != cols)
      throw ConfigError("read_chain_csv: ragged row");
    rows.push_back(std::move(row));
  }
  Chain chain;
  chain.theta.resize(rows.size(), p);
  chain.loglik.resize(rows.size());
  chain.constraint_residual.resize(rows.size());
  chain.accepted.resize(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < p; ++j) chain.theta(i, j) = rows[i][1 + j];
    chain.loglik[i] = rows[i][1 + p];
    chain.accepted[i] = rows[i][2 + p] != 0.0;
    chain.constraint_residual[i] = rows[i][3 + p];
  }
  long accepted = 0;
  for (char a : chain.accepted) accepted += a;
  chain.acceptance_rate =
      rows.empty() ? 0.0 : static_cast<double>(accepted) / rows.size();
  return chain;
}

namespace {

json summary_to_json(const ArmResult& arm) {
  auto vec = [](const VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  json a;
  a["arm"] = arm.arm;
  a["theta_tilde"] = vec(arm.theta_tilde);
  a["mean"] = vec(arm.summary.mean);
  a["sd"] = vec(arm.summary.sd);
  a["ci_lower"] = vec(arm.summary.ci_lower);
  a["ci_upper"] = vec(arm.summary.ci_upper);
  a["ess"] = vec(arm.summary.ess);
  a["acceptance_rate"] = arm.summary.acceptance_rate;
  if (!arm.covered.empty()) a["covered"] = arm.covered;
  return a;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result =
      coverage_experiment(cfg, cfg.replications, cfg.seed);
  if (cfg.output_dir.empty()) return result;

  fs::create_directories(cfg.output_dir);
  fs::path dir(cfg.output_dir);

  // deterministic aggregate: no wall-clock content
  {
    auto vec = [](const VectorXd& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    json j;
    j["digest"] = result.config_digest;
    j["config"] = {{"model", to_string(cfg.model)},
                   {"prior", to_string(cfg.prior)},
                   {"projection", to_string(cfg.projection)},
                   {"n", cfg.n},
                   {"sigma", cfg.sigma},
                   {"iterations", cfg.iterations},
                   {"burnin", cfg.burnin},
                   {"replications", cfg.replications},
                   {"seed", cfg.seed},
                   {"quadrature_points", cfg.quadrature_points}};
    j["failures"] = result.failures;
    j["aggregate"] = {
        {"posterior_mean", vec(result.mean_posterior_mean)},
        {"posterior_sd", vec(result.mean_posterior_sd)},
    };
    if (result.coverage.size() > 0)
      j["aggregate"]["coverage"] = vec(result.coverage);
    j["replications"] = json::array();
    for (const auto& rep : result.replications) {
      json r;
      r["replication"] = rep.replication;
      if (rep.failed) {
        r["failed"] = true;
        r["error"] = rep.error;
      } else {
        r["arms"] = json::array();
        for (const auto& arm : rep.arms) r["arms"].push_back(summary_to_json(arm));
      }
      j["replications"].push_back(r);
    }
    std::ofstream out(dir / "summary.json");
    out << j.dump(2) << "\n";
  }

  // aggregate table, one row per arm and coordinate
  {
    std::ofstream out(dir / "table.csv");
    out << "model,prior,projection,arm,coordinate,mean,sd,coverage,runtime_sec\n";
    out.precision(10);
    std::vector<std::string> arm_names;
    for (const auto& rep : result.replications) {
      if (rep.failed) continue;
      for (const auto& arm : rep.arms) {
        if (std::find(arm_names.begin(), arm_names.end(), arm.arm) ==
            arm_names.end())
          arm_names.push_back(arm.arm);
      }
      break;
    }
    for (const auto& name : arm_names) {
      int count = 0, pdim = 0;
      double runtime = 0.0;
      VectorXd mean, sd, covered;
      for (const auto& rep : result.replications) {
        if (rep.failed) continue;
        for (const auto& arm : rep.arms) {
          if (arm.arm != name) continue;
          if (count == 0) {
            pdim = static_cast<int>(arm.summary.mean.size());
            mean = VectorXd::Zero(pdim);
            sd = VectorXd::Zero(pdim);
            covered = VectorXd::Zero(pdim);
          }
          mean += arm.summary.mean;
          sd += arm.summary.sd;
          for (size_t j = 0; j < arm.covered.size(); ++j)
            covered[j] += arm.covered[j];
          runtime += arm.sampler_seconds;
          ++count;
        }
      }
      if (count == 0) continue;
      for (int j = 0; j < pdim; ++j) {
        out << to_string(cfg.model) << ',' << to_string(cfg.prior) << ','
            << to_string(cfg.projection) << ',' << name << ',' << j + 1 << ','
            << mean[j] / count << ',' << sd[j] / count << ','
            << covered[j] / count << ',' << runtime / count << "\n";
      }
    }
  }

  // per-replication chains (primary arm)
  for (const auto& rep : result.replications) {
    if (rep.failed) continue;
    write_chain_csv(rep.arms.front().chain,
                    (dir / ("chain_" + std::to_string(rep.replication) + ".csv"))
                        .string());
    if (cfg.diagnostics && !rep.arms.front().chain.reports.empty()) {
      std::ofstream out(
          dir / ("diagnostics_" + std::to_string(rep.replication) + ".jsonl"));
      const auto& reports = rep.arms.front().chain.reports;
      for (size_t i = 0; i < reports.size(); ++i) {
        json r;
        r["iter"] = i;
        r["lambda"] = std::vector<double>(
            reports[i].lambda.data(),
            reports[i].lambda.data() + reports[i].lambda.size());
        r["constraint_residuals"] = std::vector<double>(
            reports[i].constraint_residuals.data(),
            reports[i].constraint_residuals.data() +
                reports[i].constraint_residuals.size());
        r["gram_condition"] = reports[i].gram_condition;
        r["pseudo_inverse"] = reports[i].pseudo_inverse;
        out << r.dump() << "\n";
      }
    }
  }

  // plot-ready densities from the first successful replication
  for (const auto& rep : result.replications) {
    if (rep.failed) continue;
    for (const auto& arm : rep.arms) {
      for (int j = 0; j < arm.chain.params(); ++j) {
        MatrixXd dens = emit_density_data(arm.chain.theta.col(j), 512);
        std::string name = rep.arms.size() > 1
                               ? "density_" + arm.arm + "_theta_" +
                                     std::to_string(j + 1) + ".csv"
                               : "density_theta_" + std::to_string(j + 1) +
                                     ".csv";
        std::ofstream out(dir / name);
        out << "theta,density\n";
        out.precision(12);
        for (int g = 0; g < dens.rows(); ++g)
          out << dens(g, 0) << ',' << dens(g, 1) << "\n";
      }
    }
    break;
  }
  return result;
}

bool experiment_ok(const ExperimentResult& result,
                   const ExperimentConfig& cfg) {
  if (result.failures > 0) return false;
  auto reaches = [&](const WarningList& list) {
    for (const auto& w : list)
      if (static_cast<int>(w.severity) >= static_cast<int>(cfg.warning_threshold))
        return true;
    return false;
  };
  if (reaches(result.warnings)) return false;
  for (const auto& rep : result.replications)
    if (reaches(rep.warnings)) return false;
  return true;
}

}  // namespace orthocal
