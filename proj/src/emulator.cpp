#include "orthocal/emulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "orthocal/optim.hpp"

namespace orthocal {

namespace {

double sq_exp(const VectorXd& a, const VectorXd& b,
              const VectorXd& inv_ls2) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d * inv_ls2[i];
  }
  return std::exp(-0.5 * s);
}

VectorXd inv_lengthscale_sq(const VectorXd& log_ls) {
  return (-2.0 * log_ls.array()).exp().matrix();
}

}  // namespace

RunTable::RunTable(MatrixXd inputs_, MatrixXd outputs_, int param_dim_,
                   int input_dim_)
    : inputs(std::move(inputs_)),
      outputs(std::move(outputs_)),
      param_dim(param_dim_),
      input_dim(input_dim_) {
  if (param_dim < 1 || input_dim < 1)
    throw ContractError("RunTable: need p >= 1 and d >= 1");
  if (inputs.cols() != param_dim + input_dim)
    throw DimensionError("RunTable: input column count mismatch");
  if (outputs.rows() != inputs.rows())
    throw DimensionError("RunTable: input/output row mismatch");
  if (rows() < param_dim + input_dim + 1)
    throw ContractError("RunTable: need at least p + d + 1 rows");
  // duplicate (t, x) rows make the interpolation problem singular
  std::vector<int> order(rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int c = 0; c < inputs.cols(); ++c) {
      if (inputs(a, c) != inputs(b, c)) return inputs(a, c) < inputs(b, c);
    }
    return false;
  });
  for (size_t i = 1; i < order.size(); ++i) {
    if (inputs.row(order[i]) == inputs.row(order[i - 1]))
      throw ContractError("RunTable: duplicate (t, x) rows");
  }
}

RunTable read_run_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("read_run_table_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError("read_run_table_csv: empty file");

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  int p = 0, d = 0, q = 0;
  for (const auto& h : header) {
    if (h.rfind("t_", 0) == 0) ++p;
    else if (h.rfind("x_", 0) == 0) ++d;
    else if (h.rfind("f_", 0) == 0) ++q;
    else throw ConfigError("read_run_table_csv: unexpected column " + h);
  }
  if (p < 1 || d < 1 || q < 1)
    throw ConfigError("read_run_table_csv: header must name t_*, x_*, f_*");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> row;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    if (static_cast<int>(row.size()) != p + d + q)
      throw ConfigError("read_run_table_csv: ragged row");
    rows.push_back(std::move(row));
  }
  MatrixXd inputs(rows.size(), p + d), outputs(rows.size(), q);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < p + d; ++c) inputs(i, c) = rows[i][c];
    for (int c = 0; c < q; ++c) outputs(i, c) = rows[i][p + d + c];
  }
  return RunTable(std::move(inputs), std::move(outputs), p, d);
}

void write_run_table_csv(const RunTable& runs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_run_table_csv: cannot open " + path);
  for (int j = 0; j < runs.param_dim; ++j) out << (j ? "," : "") << "t_" << j + 1;
  for (int j = 0; j < runs.input_dim; ++j) out << ",x_" << j + 1;
  for (int j = 0; j < runs.outcomes(); ++j) out << ",f_" << j + 1;
  out << "\n";
  out.precision(17);
  for (int i = 0; i < runs.rows(); ++i) {
    for (int c = 0; c < runs.inputs.cols(); ++c)
      out << (c ? "," : "") << runs.inputs(i, c);
    for (int c = 0; c < runs.outputs.cols(); ++c) out << "," << runs.outputs(i, c);
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Surrogate

struct Surrogate::SiteCache {
  MatrixXd sites;  // the x block this cache was built for
  // per outcome: (#unique thetas) x (#sites) partial kernel sums
  std::vector<MatrixXd> partials;
};

Surrogate::Surrogate(MatrixXd train_inputs,
                     std::vector<SurrogateOutcome> outcomes, int param_dim,
                     int input_dim, double nugget_rel)
    : train_inputs_(std::move(train_inputs)),
      outcomes_(std::move(outcomes)),
      param_dim_(param_dim),
      input_dim_(input_dim),
      nugget_rel_(nugget_rel) {
  const int n = static_cast<int>(train_inputs_.rows());
  VectorXd lo = train_inputs_.leftCols(param_dim_).colwise().minCoeff();
  VectorXd hi = train_inputs_.leftCols(param_dim_).colwise().maxCoeff();
  for (int j = 0; j < param_dim_; ++j)
    if (!(lo[j] < hi[j])) hi[j] = lo[j] + 1e-12;  // degenerate axis
  theta_box_ = Box(lo, hi);

  // group rows by exact parameter block
  for (int i = 0; i < n; ++i) {
    VectorXd t = train_inputs_.row(i).head(param_dim_).transpose();
    int found = -1;
    for (size_t u = 0; u < unique_thetas_.size(); ++u) {
      if (unique_thetas_[u] == t) {
        found = static_cast<int>(u);
        break;
      }
    }
    if (found < 0) {
      unique_thetas_.push_back(t);
      theta_groups_.emplace_back();
      found = static_cast<int>(unique_thetas_.size()) - 1;
    }
    theta_groups_[found].push_back(i);
  }
}

VectorXd Surrogate::predict(const VectorXd& u) const {
  if (u.size() != param_dim_ + input_dim_)
    throw DimensionError("Surrogate::predict: input dimension mismatch");
  VectorXd out(outcomes());
  for (int k = 0; k < outcomes(); ++k) {
    const auto& oc = outcomes_[k];
    VectorXd inv_ls2 = inv_lengthscale_sq(oc.log_lengthscales);
    double acc = 0.0;
    // signal variance cancels between k_* and K^{-1} with a relative nugget
    for (int i = 0; i < train_inputs_.rows(); ++i)
      acc += oc.alpha[i] *
             sq_exp(u, train_inputs_.row(i).transpose(), inv_ls2);
    out[k] = oc.mean_shift + acc;
  }
  return out;
}

MatrixXd Surrogate::predict_at_sites(const MatrixXd& x_sites,
                                     const VectorXd& t) const {
  if (x_sites.cols() != input_dim_ || t.size() != param_dim_)
    throw DimensionError("Surrogate::predict_at_sites: shape mismatch");

  std::shared_ptr<const SiteCache> cache;
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (site_cache_ && site_cache_->sites.rows() == x_sites.rows() &&
        site_cache_->sites == x_sites) {
      cache = site_cache_;
    }
  }
  if (!cache) {
    auto fresh = std::make_shared<SiteCache>();
    fresh->sites = x_sites;
    fresh->partials.resize(outcomes());
    const int nu = static_cast<int>(unique_thetas_.size());
    for (int k = 0; k < outcomes(); ++k) {
      const auto& oc = outcomes_[k];
      VectorXd inv_ls2 = inv_lengthscale_sq(oc.log_lengthscales);
      VectorXd inv_ls2_x = inv_ls2.tail(input_dim_);
      MatrixXd part = MatrixXd::Zero(nu, x_sites.rows());
      for (int u = 0; u < nu; ++u) {
        for (int row : theta_groups_[u]) {
          VectorXd xr = train_inputs_.row(row).tail(input_dim_).transpose();
          for (int s = 0; s < x_sites.rows(); ++s) {
            part(u, s) += oc.alpha[row] *
                          sq_exp(x_sites.row(s).transpose(), xr, inv_ls2_x);
          }
        }
      }
      fresh->partials[k] = std::move(part);
    }
    std::lock_guard<std::mutex> lock(cache_mutex_);
    site_cache_ = fresh;
    cache = site_cache_;
  }

  const int nu = static_cast<int>(unique_thetas_.size());
  MatrixXd out(x_sites.rows(), outcomes());
  for (int k = 0; k < outcomes(); ++k) {
    const auto& oc = outcomes_[k];
    VectorXd inv_ls2_t =
        inv_lengthscale_sq(oc.log_lengthscales).head(param_dim_);
    VectorXd kt(nu);
    for (int u = 0; u < nu; ++u)
      kt[u] = sq_exp(t, unique_thetas_[u], inv_ls2_t);
    out.col(k) = cache->partials[k].transpose() * kt;
    out.col(k).array() += oc.mean_shift;
  }
  return out;
}

bool Surrogate::theta_in_training_range(const VectorXd& t) const {
  return theta_box_.contains(t, 1e-12);
}

std::string Surrogate::to_json() const {
  nlohmann::json j;
  j["kernel"] = "squared_exponential";
  j["param_dim"] = param_dim_;
  j["input_dim"] = input_dim_;
  j["nugget_rel"] = nugget_rel_;
  // cheap content digest so a persisted fit can be matched to its run table
  std::uint64_t digest = 1469598103934665603ULL;
  auto mix = [&digest](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    digest ^= bits;
    digest *= 1099511628211ULL;
  };
  for (int i = 0; i < train_inputs_.rows(); ++i)
    for (int c = 0; c < train_inputs_.cols(); ++c) mix(train_inputs_(i, c));
  j["training_digest"] = digest;
  j["outcomes"] = nlohmann::json::array();
  for (const auto& oc : outcomes_) {
    nlohmann::json o;
    o["log_lengthscales"] =
        std::vector<double>(oc.log_lengthscales.data(),
                            oc.log_lengthscales.data() + oc.log_lengthscales.size());
    o["signal_variance"] = oc.signal_variance;
    o["mean_shift"] = oc.mean_shift;
    o["holdout_rmse"] = oc.holdout_rmse;
    o["holdout_rel_rmse"] = oc.holdout_rel_rmse;
    j["outcomes"].push_back(o);
  }
  return j.dump(2);
}

namespace {

MatrixXd kernel_matrix(const MatrixXd& X, const VectorXd& inv_ls2) {
  const int n = static_cast<int>(X.rows());
  MatrixXd K(n, n);
  for (int i = 0; i < n; ++i) {
    K(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double v = sq_exp(X.row(i).transpose(), X.row(j).transpose(), inv_ls2);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

// negative log marginal likelihood of a centered outcome under
// sigma2 * (R + nugget I)
double neg_log_marginal(const MatrixXd& X, const VectorXd& y,
                        const VectorXd& log_ls, double log_sigma2,
                        double nugget_rel) {
  const int n = static_cast<int>(X.rows());
  double sigma2 = std::exp(log_sigma2);
  MatrixXd K = kernel_matrix(X, inv_lengthscale_sq(log_ls));
  K.diagonal().array() += nugget_rel;
  Eigen::LLT<MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) return 1e12;
  VectorXd alpha = llt.solve(y);
  double quad = y.dot(alpha) / sigma2;
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum() +
                  n * std::log(sigma2);
  return 0.5 * (quad + logdet + n * std::log(2.0 * M_PI));
}

}  // namespace

std::shared_ptr<Surrogate> fit_surrogate(const RunTable& runs,
                                         double holdout_fraction,
                                         const SurrogateFitOptions& opts,
                                         WarningList* warnings) {
  if (holdout_fraction < 0.0 || holdout_fraction > 0.5)
    throw ContractError("fit_surrogate: holdout fraction must be in [0, 0.5]");
  const int N = runs.rows();
  const int dim = runs.param_dim + runs.input_dim;

  Rng rng = make_rng(opts.seed);
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  int n_hold = static_cast<int>(std::lround(holdout_fraction * N));
  int n_train = N - n_hold;
  if (n_train < 10)
    throw FitError("fit_surrogate: fewer than 10 training rows after holdout");

  MatrixXd Xtr(n_train, dim), Xho(n_hold, dim);
  MatrixXd Ytr(n_train, runs.outcomes()), Yho(n_hold, runs.outcomes());
  for (int i = 0; i < n_train; ++i) {
    Xtr.row(i) = runs.inputs.row(order[i]);
    Ytr.row(i) = runs.outputs.row(order[i]);
  }
  for (int i = 0; i < n_hold; ++i) {
    Xho.row(i) = runs.inputs.row(order[n_train + i]);
    Yho.row(i) = runs.outputs.row(order[n_train + i]);
  }

  // axis ranges drive the length-scale search box
  VectorXd range(dim);
  for (int c = 0; c < dim; ++c) {
    double w = Xtr.col(c).maxCoeff() - Xtr.col(c).minCoeff();
    range[c] = w > 0.0 ? w : 1.0;
  }

  // hyperparameter search on a subsample when the table is large
  int n_ml = std::min(n_train, opts.likelihood_subsample);
  std::vector<int> ml_rows(n_train);
  std::iota(ml_rows.begin(), ml_rows.end(), 0);
  std::shuffle(ml_rows.begin(), ml_rows.end(), rng);
  ml_rows.resize(n_ml);
  MatrixXd Xml(n_ml, dim);
  for (int i = 0; i < n_ml; ++i) Xml.row(i) = Xtr.row(ml_rows[i]);

  std::vector<SurrogateOutcome> fitted;
  for (int k = 0; k < runs.outcomes(); ++k) {
    double mean_shift = Ytr.col(k).mean();
    VectorXd yc = Ytr.col(k).array() - mean_shift;
    double var = yc.squaredNorm() / std::max(1, n_train - 1);
    if (var <= 0.0) var = 1e-12;

    VectorXd yml(n_ml);
    for (int i = 0; i < n_ml; ++i) yml[i] = yc[ml_rows[i]];

    // search over (log lengthscales, log sigma2)
    VectorXd lo(dim + 1), hi(dim + 1);
    for (int c = 0; c < dim; ++c) {
      lo[c] = std::log(0.05 * range[c]);
      hi[c] = std::log(2.0 * range[c]);
    }
    lo[dim] = std::log(0.05 * var);
    hi[dim] = std::log(20.0 * var);
    Box search(lo, hi);

    auto objective = [&](const VectorXd& h) {
      return neg_log_marginal(Xml, yml, h.head(dim), h[dim], opts.ml_nugget_rel);
    };
    MultistartOptions ms;
    ms.starts = opts.multistarts;
    ms.local.max_iters = opts.nm_max_iters;
    ms.local.simplex_tol = 1e-3;
    NelderMeadResult best = multistart_minimize(objective, search, rng, ms);

    SurrogateOutcome oc;
    oc.log_lengthscales = best.x.head(dim);
    oc.signal_variance = std::exp(best.x[dim]);
    oc.mean_shift = mean_shift;

    // final interpolator on the full training block
    MatrixXd K = kernel_matrix(Xtr, inv_lengthscale_sq(oc.log_lengthscales));
    double nugget = opts.nugget_rel;
    Eigen::LLT<MatrixXd> llt;
    for (int attempt = 0;; ++attempt) {
      MatrixXd Kj = K;
      Kj.diagonal().array() += nugget;
      llt.compute(Kj);
      if (llt.info() == Eigen::Success) break;
      if (attempt >= 4) throw FitError("fit_surrogate: factorization failed");
      nugget *= 10.0;
      warn(warnings, Severity::warning,
           "fit_surrogate: nugget escalated for conditioning");
    }
    oc.alpha = llt.solve(yc);

    if (n_hold > 0) {
      VectorXd inv_ls2 = inv_lengthscale_sq(oc.log_lengthscales);
      double sse = 0.0;
      for (int i = 0; i < n_hold; ++i) {
        double pred = 0.0;
        for (int j = 0; j < n_train; ++j)
          pred += oc.alpha[j] * sq_exp(Xho.row(i).transpose(),
                                       Xtr.row(j).transpose(), inv_ls2);
        double err = Yho(i, k) - (mean_shift + pred);
        sse += err * err;
      }
      oc.holdout_rmse = std::sqrt(sse / n_hold);
      double ho_mean = Yho.col(k).mean();
      double ho_sd = std::sqrt(
          (Yho.col(k).array() - ho_mean).square().sum() / std::max(1, n_hold - 1));
      oc.holdout_rel_rmse = oc.holdout_rmse / std::max(ho_sd, 1e-12);
    }
    fitted.push_back(std::move(oc));
  }

  return std::make_shared<Surrogate>(std::move(Xtr), std::move(fitted),
                                     runs.param_dim, runs.input_dim,
                                     opts.nugget_rel);
}

ComputerModel surrogate_as_model(std::shared_ptr<const Surrogate> s,
                                 const Box& theta_domain,
                                 WarningList* warnings) {
  if (!s) throw ContractError("surrogate_as_model: null surrogate");
  if (theta_domain.dim() != s->param_dim())
    throw DimensionError("surrogate_as_model: Theta dimension mismatch");

  auto flagged = std::make_shared<std::atomic<bool>>(false);
  auto shared_warnings = warnings;
  auto check_range = [s, flagged, shared_warnings](const VectorXd& t) {
    if (!s->theta_in_training_range(t) && !flagged->exchange(true)) {
      warn(shared_warnings, Severity::warning,
           "surrogate: evaluated outside the training parameter range");
    }
  };

  ComputerModel m;
  m.outputs = s->outcomes();
  m.theta_domain = theta_domain;
  m.gradient_mode = GradientMode::finite_difference;
  m.eval_fn = [s, check_range](const VectorXd& x, const VectorXd& t) {
    check_range(t);
    VectorXd u(t.size() + x.size());
    u << t, x;
    return s->predict(u);
  };
  m.batch_fn = [s, check_range](const MatrixXd& X, const VectorXd& t) {
    check_range(t);
    return s->predict_at_sites(X, t);
  };
  return m;
}

NoiseModel estimate_noise_covariance(const FieldObservations& field,
                                     const SmootherSpec& spec) {
  const int n = field.size();
  const int q = field.outcomes();
  if (n < 10)
    throw EstimationError("estimate_noise_covariance: need n >= 10");

  MatrixXd dist(n, n);
  double dmax = 0.0;
  for (int i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      double d = (field.design.points.row(i) - field.design.points.row(j)).norm();
      dist(i, j) = d;
      dist(j, i) = d;
      dmax = std::max(dmax, d);
    }
  }
  if (dmax <= 0.0)
    throw EstimationError("estimate_noise_covariance: degenerate design");

  VectorXd bandwidths(spec.bandwidth_grid);
  double lo = std::log(spec.min_bandwidth_rel * dmax);
  double hi = std::log(spec.max_bandwidth_rel * dmax);
  for (int b = 0; b < spec.bandwidth_grid; ++b)
    bandwidths[b] =
        std::exp(lo + (hi - lo) * b / std::max(1, spec.bandwidth_grid - 1));

  MatrixXd residuals(n, q);
  for (int k = 0; k < q; ++k) {
    const VectorXd y = field.values.col(k);
    double best_score = std::numeric_limits<double>::infinity();
    double best_h = bandwidths[spec.bandwidth_grid - 1];
    for (int b = 0; b < spec.bandwidth_grid; ++b) {
      double h = bandwidths[b];
      double score = 0.0;
      bool valid = true;
      for (int i = 0; i < n && valid; ++i) {
        double num = 0.0, den = 0.0;
        for (int j = 0; j < n; ++j) {
          if (j == i) continue;
          double w = std::exp(-0.5 * std::pow(dist(i, j) / h, 2));
          num += w * y[j];
          den += w;
        }
        if (den < 1e-12) {
          valid = false;
          break;
        }
        double e = y[i] - num / den;
        score += e * e;
      }
      if (valid && score < best_score) {
        best_score = score;
        best_h = h;
      }
    }
    // full-sample fit at the selected bandwidth
    for (int i = 0; i < n; ++i) {
      double num = 0.0, den = 0.0;
      for (int j = 0; j < n; ++j) {
        double w = std::exp(-0.5 * std::pow(dist(i, j) / best_h, 2));
        num += w * y[j];
        den += w;
      }
      residuals(i, k) = y[i] - num / den;
    }
  }

  Eigen::RowVectorXd mean = residuals.colwise().mean();
  MatrixXd centered = residuals.rowwise() - mean;
  MatrixXd cov = centered.transpose() * centered / std::max(1, n - 1);
  cov = 0.5 * (cov + cov.transpose());
  return NoiseModel(cov);
}

}  // namespace orthocal
