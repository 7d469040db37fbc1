#pragma once

#include "orthocal/priors.hpp"

namespace orthocal {

struct ProjectionReport {
  VectorXd lambda;                // multipliers of the removed component
  VectorXd constraint_residuals;  // <g_j, b*> after projection
  double gram_condition = 0.0;
  bool pseudo_inverse = false;

  double max_relative_residual = 0.0;  // scaled by ||b|| ||g_j||
};

// Closest point of F = {b : <g_j, b> = 0 for all j} in the L2 norm:
// b* = b - sum_j lambda_j g_j with Q lambda = eta, eta_j = <b, g_j>.
// Design-point values are corrected by the same combination, which requires
// the constraint set to carry gradients at the design points whenever the
// draw does.
std::pair<BiasDraw, ProjectionReport> functional_project(
    const BiasDraw& b, const ConstraintSet& cs, WarningList* warnings = nullptr);

struct ConstrainedGaussian {
  VectorXd mean;
  MatrixXd cov;
  bool pseudo_inverse = false;
};

// Law of X | A^T X = 0 for X ~ N(mean, cov), constraints as columns of A:
// N(mu - S A (A^T S A)^{-1} A^T mu, S - S A (A^T S A)^{-1} A^T S).
ConstrainedGaussian finite_dim_project_gaussian(const VectorXd& mean,
                                                const MatrixXd& cov,
                                                const MatrixXd& A,
                                                WarningList* warnings = nullptr);

// The projector S^{1/2} (I - P_B) S^{-1/2} with B = S^{1/2} A; its output
// always satisfies A^T out = 0 and pushing N(mean, cov) through it yields
// exactly the constrained-Gaussian law above.
MatrixXd whitened_projector(const MatrixXd& cov, const MatrixXd& A,
                            WarningList* warnings = nullptr);

VectorXd whitened_project_sample(const VectorXd& x, const MatrixXd& cov,
                                 const MatrixXd& A,
                                 WarningList* warnings = nullptr);

enum class MomentConstraintMode {
  quadrature,  // weighted gradient values on the grid (integral analogue)
  design       // plain gradient values at the design points
};

struct MomentProjectionOptions {
  MomentConstraintMode mode = MomentConstraintMode::quadrature;
  double ridge_rel = 1e-8;  // times trace/dim, added to the sample covariance
};

// Stack a draw as the per-outcome [design; grid] vector and back.
VectorXd stack_bias(const BiasDraw& draw);
BiasDraw unstack_bias(const VectorXd& v, int n_design,
                      const QuadratureRulePtr& rule, int q);

// Discretized constraint matrix for the stacked vector (dim x p).
MatrixXd stacked_constraint_matrix(const ConstraintSet& cs, int n_design,
                                   MomentConstraintMode mode);

// Sample-moment projection for priors without tractable Gaussian
// conditionals: estimate the conditional covariance from M draws, then
// whiten-project a fresh draw against the discretized constraints.
BiasDraw moment_project_nongaussian(const BiasPrior& prior,
                                    const MatrixXd& residuals,
                                    const ConstraintSet& cs, int M, Rng& rng,
                                    const MomentProjectionOptions& opts = {},
                                    WarningList* warnings = nullptr);

// Relative size of the discrete constraint violations of a stacked vector.
double stacked_constraint_residual(const VectorXd& v, const MatrixXd& G);

}  // namespace orthocal
