#pragma once

#include <memory>
#include <mutex>
#include <string>

#include "orthocal/model.hpp"

namespace orthocal {

// Simulator evaluations at finitely many (t, x) pairs.
struct RunTable {
  MatrixXd inputs;   // N x (p + d), parameter columns first
  MatrixXd outputs;  // N x q
  int param_dim = 0;
  int input_dim = 0;

  RunTable() = default;
  RunTable(MatrixXd inputs_, MatrixXd outputs_, int param_dim_, int input_dim_);
  int rows() const { return static_cast<int>(inputs.rows()); }
  int outcomes() const { return static_cast<int>(outputs.cols()); }
};

// CSV schema: header t_1..t_p,x_1..x_d,f_1..f_q, one row per (run, location).
RunTable read_run_table_csv(const std::string& path);
void write_run_table_csv(const RunTable& runs, const std::string& path);

struct SurrogateOutcome {
  VectorXd log_lengthscales;  // per input axis
  double signal_variance = 1.0;
  double mean_shift = 0.0;
  VectorXd alpha;             // (K + nugget I)^{-1} (y - mean)
  double holdout_rmse = 0.0;
  double holdout_rel_rmse = 0.0;
};

// Deterministic kernel interpolator, one independent squared-exponential
// interpolator per outcome. Immutable after fitting; safe to share across
// threads (the batch-prediction site cache is internally locked).
class Surrogate {
 public:
  Surrogate(MatrixXd train_inputs, std::vector<SurrogateOutcome> outcomes,
            int param_dim, int input_dim, double nugget_rel);

  int param_dim() const { return param_dim_; }
  int input_dim() const { return input_dim_; }
  int outcomes() const { return static_cast<int>(outcomes_.size()); }
  double nugget_rel() const { return nugget_rel_; }
  const std::vector<SurrogateOutcome>& outcome_models() const {
    return outcomes_;
  }

  // Predictive mean at one (t, x) input, u = (t_1..t_p, x_1..x_d).
  VectorXd predict(const VectorXd& u) const;

  // Predictive means at a fixed set of x sites for a single t. Training rows
  // are grouped by their parameter block, so repeated calls with the same
  // sites cost O(#unique t) rather than O(N) per site.
  MatrixXd predict_at_sites(const MatrixXd& x_sites, const VectorXd& t) const;

  bool theta_in_training_range(const VectorXd& t) const;
  const Box& training_theta_box() const { return theta_box_; }

  std::string to_json() const;

 private:
  struct SiteCache;

  MatrixXd train_inputs_;
  std::vector<SurrogateOutcome> outcomes_;
  int param_dim_;
  int input_dim_;
  double nugget_rel_;
  Box theta_box_;

  // training rows grouped by unique parameter block
  std::vector<VectorXd> unique_thetas_;
  std::vector<std::vector<int>> theta_groups_;

  mutable std::mutex cache_mutex_;
  mutable std::shared_ptr<const SiteCache> site_cache_;
};

struct SurrogateFitOptions {
  int multistarts = 5;
  // interpolation solve; small enough that training outputs are reproduced
  // to ~1e-6 relative even on dense run grids, escalated x10 on
  // factorization failure
  double nugget_rel = 1e-12;
  double ml_nugget_rel = 1e-8;     // marginal-likelihood objective
  int likelihood_subsample = 400;  // hyperparameter search only
  int nm_max_iters = 150;
  std::uint64_t seed = 20240901;
};

// Per-outcome interpolators with hyperparameters chosen by maximizing the
// (sub-sampled when large) marginal likelihood from random multistarts.
// Held-out rows measure the RMSE recorded on each outcome.
std::shared_ptr<Surrogate> fit_surrogate(const RunTable& runs,
                                         double holdout_fraction,
                                         const SurrogateFitOptions& opts = {},
                                         WarningList* warnings = nullptr);

// Expose the surrogate mean as a ComputerModel with finite-difference
// gradients. The first evaluation outside the training parameter range
// raises an extrapolation warning on the shared warning list.
ComputerModel surrogate_as_model(std::shared_ptr<const Surrogate> s,
                                 const Box& theta_domain,
                                 WarningList* warnings = nullptr);

struct SmootherSpec {
  int bandwidth_grid = 20;       // log-spaced candidates
  double min_bandwidth_rel = 0.01;  // times the max pairwise distance
  double max_bandwidth_rel = 0.5;
};

// Plug-in noise covariance: per-outcome Nadaraya-Watson fit with
// leave-one-out bandwidth selection, then the sample covariance of the
// residual matrix.
NoiseModel estimate_noise_covariance(const FieldObservations& field,
                                     const SmootherSpec& spec = {});

}  // namespace orthocal
