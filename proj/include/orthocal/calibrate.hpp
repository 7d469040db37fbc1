#pragma once

#include "orthocal/mcmc.hpp"
#include "orthocal/projection.hpp"

namespace orthocal {

// Independent N(0, gamma^2) coordinates truncated to the parameter box.
struct ThetaPrior {
  double gamma = 10.0;
  Box domain;

  ThetaPrior() = default;
  ThetaPrior(double gamma_, Box domain_)
      : gamma(gamma_), domain(std::move(domain_)) {
    if (gamma <= 0.0) throw ContractError("ThetaPrior: gamma must be > 0");
  }

  // Unnormalized: -inf outside the box.
  double log_density(const VectorXd& t) const {
    if (!domain.contains(t))
      return -std::numeric_limits<double>::infinity();
    return -0.5 * t.squaredNorm() / (gamma * gamma);
  }
};

// Population loss sum_k int (y_k - f_k(., t))^2 dx via quadrature.
double l2_loss(const std::function<VectorXd(const VectorXd&)>& system,
               const ComputerModel& m, const VectorXd& t,
               const QuadratureRulePtr& rule);

// Empirical counterpart (1/nq) sum_k sum_i (y_ik - f_k(x_i, t))^2.
double l2_loss(const FieldObservations& field, const ComputerModel& m,
               const VectorXd& t);

struct AnchorOptions {
  int starts = 10;
  double simplex_tol = 1e-6;
  int max_iters = 4000;
};

// Empirical-risk minimizer over Theta: multistart Nelder-Mead from Latin
// hypercube starts, best minimizer clamped to the box.
VectorXd estimate_anchor(const FieldObservations& field, const ComputerModel& m,
                         Rng& rng, const AnchorOptions& opts = {});

enum class ProjectionMethod { functional, finite_dim, moment };

struct SamplerOptions {
  int iterations = 5000;
  int burnin = 1000;
  ProjectionMethod projection = ProjectionMethod::functional;
  MomentConstraintMode moment_mode = MomentConstraintMode::quadrature;
  int moment_sample_multiplier = 10;  // M = multiplier x stacked dimension
  bool likelihood_enabled = true;     // off: prior-only sanity runs
  double initial_proposal_rel = 0.01; // times the per-axis Theta width
  double constraint_tol = 1e-8;       // per-iteration orthogonality check
  bool record_bias = false;
};

// Post-burn-in draws plus per-iteration diagnostics.
struct Chain {
  MatrixXd theta;                 // kept x p
  VectorXd loglik;                // data term only
  VectorXd constraint_residual;   // relative, per stored iteration
  std::vector<char> accepted;
  std::vector<BiasDraw> bias;     // populated when record_bias
  std::vector<ProjectionReport> reports;  // functional projection only
  double acceptance_rate = 0.0;
  WarningList warnings;

  long length() const { return theta.rows(); }
  int params() const { return static_cast<int>(theta.cols()); }
};

// Mutable sampler state (exposed mostly for tests).
struct ChainState {
  VectorXd theta;
  BiasDraw bias;
  MatrixXd proposal_cov;
  long accept_count = 0;
  long iter = 0;
};

// Gibbs loop: draw the bias conditional, project it onto the constraint
// set, then take one adaptive Metropolis step on theta against the
// projected bias. Adaptation freezes at the end of burn-in.
Chain run_projection_sampler(const FieldObservations& field,
                             const ComputerModel& m, const BiasPrior& prior,
                             const ThetaPrior& theta_prior,
                             const ConstraintSet& cs, const NoiseModel& noise,
                             const SamplerOptions& opts, Rng& rng);

struct PosteriorSummary {
  VectorXd mean;
  VectorXd sd;
  VectorXd ci_lower;
  VectorXd ci_upper;
  VectorXd ess;
  double acceptance_rate = 0.0;
  double level = 0.95;
  WarningList warnings;
};

PosteriorSummary summarize_chain(const Chain& chain, double level = 0.95);

}  // namespace orthocal
