#pragma once

#include <functional>
#include <memory>

#include "orthocal/model.hpp"

namespace orthocal {

// One realization of the bias function, carried jointly on the design points
// and the quadrature grid so that projections can correct both consistently.
struct BiasDraw {
  enum class Provenance { raw, projected };

  MatrixXd design_values;  // n x q
  GridFunction grid_values;
  Provenance provenance = Provenance::raw;

  int outcomes() const { return grid_values.outcomes(); }
};

// Stationary covariance sigma2 (1 + r/psi) exp(-r/psi).
struct MaternKernel {
  double sigma2 = 1.0;
  double psi = 0.5;

  MaternKernel() = default;
  MaternKernel(double sigma2_, double psi_) : sigma2(sigma2_), psi(psi_) {
    if (sigma2 <= 0.0 || psi <= 0.0)
      throw ContractError("MaternKernel: parameters must be positive");
  }
  double operator()(const VectorXd& x, const VectorXd& y) const {
    double r = (x - y).norm() / psi;
    return sigma2 * (1.0 + r) * std::exp(-r);
  }
};

using CovarianceFn = std::function<double(const VectorXd&, const VectorXd&)>;

// Nonparametric prior on the bias with a sampler for its conditional given
// residuals at the design points. Outcomes are a priori independent; noise
// couplings are handled by whitening upstream.
class BiasPrior {
 public:
  virtual ~BiasPrior() = default;

  // residuals: n x q values y_F - f(., theta) at the design points.
  virtual BiasDraw conditional_draw(const MatrixXd& residuals,
                                    Rng& rng) const = 0;

  // Evaluate the function underlying a draw at arbitrary points.
  virtual MatrixXd evaluate(const BiasDraw& draw,
                            const MatrixXd& points) const = 0;

  virtual bool is_gaussian_conditional() const = 0;
  virtual int outcomes() const = 0;
  virtual int design_size() const = 0;
  virtual int grid_size() const = 0;

  // For Gaussian-conditional priors only: covariance of the stacked
  // per-outcome [design; grid] vector (block diagonal across outcomes,
  // independent of the residuals).
  virtual MatrixXd conditional_covariance() const;
};

using BiasPriorPtr = std::shared_ptr<const BiasPrior>;

struct GpPriorOptions {
  JitterPolicy jitter;
};

// Gaussian-process prior conditioned jointly on design + quadrature nodes.
class GpBiasPrior : public BiasPrior {
 public:
  // One covariance per outcome; noise_variances are the per-outcome error
  // variances entering the conditional.
  GpBiasPrior(Design design, QuadratureRulePtr rule,
              std::vector<CovarianceFn> covariances, VectorXd noise_variances,
              const GpPriorOptions& opts = {});

  // Convenience: shared Matern kernel, iid noise.
  GpBiasPrior(Design design, QuadratureRulePtr rule, const MaternKernel& kernel,
              const NoiseModel& noise, const GpPriorOptions& opts = {});

  BiasDraw conditional_draw(const MatrixXd& residuals, Rng& rng) const override;
  MatrixXd evaluate(const BiasDraw& draw, const MatrixXd& points) const override;
  bool is_gaussian_conditional() const override { return true; }
  int outcomes() const override { return static_cast<int>(per_outcome_.size()); }
  int design_size() const override { return design_.size(); }
  int grid_size() const override { return rule_->size(); }
  MatrixXd conditional_covariance() const override;

  // Conditional mean and covariance over the union nodes for outcome k.
  VectorXd conditional_mean(const VectorXd& residuals_k, int k) const;
  const MatrixXd& conditional_cov(int k) const;

 private:
  struct OutcomeState {
    CovarianceFn cov;
    MatrixXd prior_cov;  // over the union nodes
    MatrixXd mean_op;    // (n + grid) x n, maps residuals to conditional mean
    MatrixXd cond_cov;   // (n + grid) x (n + grid)
    MatrixXd cond_chol;
  };

  Design design_;
  QuadratureRulePtr rule_;
  MatrixXd union_points_;  // design rows first, then grid nodes
  std::vector<OutcomeState> per_outcome_;
};

// Coefficient prior N(0, tau2 I) over K cubic B-spline basis functions on a
// one-dimensional domain.
class BasisExpansionPrior : public BiasPrior {
 public:
  BasisExpansionPrior(Design design, QuadratureRulePtr rule, int basis_size,
                      double tau2, VectorXd noise_variances,
                      WarningList* warnings = nullptr);

  BiasDraw conditional_draw(const MatrixXd& residuals, Rng& rng) const override;
  MatrixXd evaluate(const BiasDraw& draw, const MatrixXd& points) const override;
  bool is_gaussian_conditional() const override { return true; }
  int outcomes() const override { return static_cast<int>(noise_variances_.size()); }
  int design_size() const override { return design_.size(); }
  int grid_size() const override { return rule_->size(); }
  MatrixXd conditional_covariance() const override;

  // Restrict the coefficient space to the null space of M (rows are linear
  // functionals of the coefficients), so every draw satisfies them exactly.
  std::shared_ptr<BasisExpansionPrior> restricted_to_nullspace(
      const MatrixXd& M) const;

  int basis_size() const { return static_cast<int>(coef_basis_.cols()) ; }
  MatrixXd basis_at(const MatrixXd& points) const;  // |points| x K_effective

  // Posterior coefficient moments for outcome k given residuals.
  std::pair<VectorXd, MatrixXd> coefficient_posterior(
      const VectorXd& residuals_k, int k) const;

 private:
  BasisExpansionPrior(const BasisExpansionPrior& other, MatrixXd coef_basis);
  void rebuild_design_matrices();
  MatrixXd raw_basis_at(const MatrixXd& points) const;

  Design design_;
  QuadratureRulePtr rule_;
  int raw_basis_size_;
  double tau2_;
  VectorXd noise_variances_;
  VectorXd knots_;
  MatrixXd coef_basis_;   // raw-basis -> effective-coefficient map (K x Ke)
  MatrixXd design_mat_;   // n x Ke
  MatrixXd grid_mat_;     // grid x Ke
  std::vector<Eigen::LLT<MatrixXd>> posterior_llt_;  // per outcome precision
  std::vector<MatrixXd> posterior_cov_;
  WarningList* warnings_ = nullptr;
};

// Covariance with the parameter-gradient functionals conditioned to zero:
// C0(x,x') - h(x)^T H^+ h(x'), h_j(x) = sum_i w_i g_{j,k}(u_i) C0(x, u_i),
// H_{jl} the double quadrature of g_j g_l against C0. Realizations satisfy
// the discretized orthogonality constraints almost surely.
CovarianceFn ogp_kernel(const CovarianceFn& base, const ConstraintSet& cs,
                        const QuadratureRulePtr& rule, int outcome = 0,
                        WarningList* warnings = nullptr);

inline CovarianceFn ogp_kernel(const MaternKernel& base, const ConstraintSet& cs,
                               const QuadratureRulePtr& rule, int outcome = 0,
                               WarningList* warnings = nullptr) {
  return ogp_kernel(CovarianceFn(base), cs, rule, outcome, warnings);
}

// One-shot draws matching the spec-level operations.
BiasDraw gp_conditional_draw(const MaternKernel& kernel, const Design& design,
                             const MatrixXd& residuals, const NoiseModel& noise,
                             const QuadratureRulePtr& rule, Rng& rng);

BiasDraw basis_conditional_draw(const BasisExpansionPrior& prior,
                                const MatrixXd& residuals, Rng& rng);

}  // namespace orthocal
