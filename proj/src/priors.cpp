#include "orthocal/priors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>

namespace orthocal {

MatrixXd BiasPrior::conditional_covariance() const {
  throw ContractError(
      "conditional_covariance: prior is not Gaussian-conditional");
}

// ---------------------------------------------------------------------------
// GP prior

GpBiasPrior::GpBiasPrior(Design design, QuadratureRulePtr rule,
                         std::vector<CovarianceFn> covariances,
                         VectorXd noise_variances, const GpPriorOptions& opts)
    : design_(std::move(design)), rule_(std::move(rule)) {
  if (!rule_) throw DimensionError("GpBiasPrior: null rule");
  if (design_.dim() != rule_->dim())
    throw DimensionError("GpBiasPrior: design/rule dimension mismatch");
  const int q = static_cast<int>(covariances.size());
  if (q < 1 || noise_variances.size() != q)
    throw DimensionError("GpBiasPrior: covariance/noise count mismatch");

  const int n = design_.size();
  const int g = rule_->size();
  const int m = n + g;
  union_points_.resize(m, design_.dim());
  union_points_.topRows(n) = design_.points;
  union_points_.bottomRows(g) = rule_->nodes;

  per_outcome_.resize(q);
  for (int k = 0; k < q; ++k) {
    auto& st = per_outcome_[k];
    st.cov = covariances[k];
    st.prior_cov.resize(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = i; j < m; ++j) {
        double v = st.cov(union_points_.row(i).transpose(),
                          union_points_.row(j).transpose());
        st.prior_cov(i, j) = v;
        st.prior_cov(j, i) = v;
      }
    }
    MatrixXd data_cov = st.prior_cov.topLeftCorner(n, n);
    data_cov.diagonal().array() += noise_variances[k];
    Eigen::LLT<MatrixXd> llt(data_cov);
    double extra =
        opts.jitter.initial_rel * std::max(data_cov.trace() / n, 1e-300);
    for (int attempt = 0; llt.info() != Eigen::Success; ++attempt) {
      if (attempt > opts.jitter.escalations)
        throw NumericalError("GpBiasPrior: data covariance factorization failed");
      data_cov.diagonal().array() += extra;
      extra *= 10.0;
      llt.compute(data_cov);
    }
    MatrixXd cross = st.prior_cov.leftCols(n);  // K(U, D)
    st.mean_op = llt.solve(cross.transpose()).transpose();
    st.cond_cov = st.prior_cov - st.mean_op * cross.transpose();
    st.cond_cov = 0.5 * (st.cond_cov + st.cond_cov.transpose());
    st.cond_chol = jittered_cholesky(st.cond_cov, opts.jitter);
  }
}

GpBiasPrior::GpBiasPrior(Design design, QuadratureRulePtr rule,
                         const MaternKernel& kernel, const NoiseModel& noise,
                         const GpPriorOptions& opts)
    : GpBiasPrior(std::move(design), std::move(rule),
                  std::vector<CovarianceFn>(noise.outcomes(), CovarianceFn(kernel)),
                  noise.sigma.diagonal(), opts) {}

VectorXd GpBiasPrior::conditional_mean(const VectorXd& residuals_k,
                                       int k) const {
  return per_outcome_.at(k).mean_op * residuals_k;
}

const MatrixXd& GpBiasPrior::conditional_cov(int k) const {
  return per_outcome_.at(k).cond_cov;
}

BiasDraw GpBiasPrior::conditional_draw(const MatrixXd& residuals,
                                       Rng& rng) const {
  const int n = design_.size();
  const int g = rule_->size();
  if (residuals.rows() != n || residuals.cols() != outcomes())
    throw DimensionError("GpBiasPrior: residual shape mismatch");

  BiasDraw draw;
  draw.design_values.resize(n, outcomes());
  MatrixXd grid(g, outcomes());
  for (int k = 0; k < outcomes(); ++k) {
    const auto& st = per_outcome_[k];
    VectorXd mean = st.mean_op * residuals.col(k);
    VectorXd z(mean.size());
    for (int i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
    VectorXd sample = mean + st.cond_chol * z;
    draw.design_values.col(k) = sample.head(n);
    grid.col(k) = sample.tail(g);
  }
  draw.grid_values = GridFunction(std::move(grid), rule_);
  draw.provenance = BiasDraw::Provenance::raw;
  return draw;
}

MatrixXd GpBiasPrior::evaluate(const BiasDraw& draw,
                               const MatrixXd& points) const {
  const int n = design_.size();
  const int g = rule_->size();
  const int m = n + g;
  MatrixXd out(points.rows(), outcomes());
  for (int k = 0; k < outcomes(); ++k) {
    const auto& st = per_outcome_[k];
    VectorXd values(m);
    values.head(n) = draw.design_values.col(k);
    values.tail(g) = draw.grid_values.values.col(k);
    MatrixXd reg = st.prior_cov;
    reg.diagonal().array() += 1e-10 * std::max(reg.trace() / m, 1e-12);
    Eigen::LDLT<MatrixXd> ldlt(reg);
    VectorXd beta = ldlt.solve(values);
    for (int i = 0; i < points.rows(); ++i) {
      double acc = 0.0;
      for (int j = 0; j < m; ++j)
        acc += beta[j] * st.cov(points.row(i).transpose(),
                                union_points_.row(j).transpose());
      out(i, k) = acc;
    }
  }
  return out;
}

MatrixXd GpBiasPrior::conditional_covariance() const {
  const int m = design_.size() + rule_->size();
  const int q = outcomes();
  MatrixXd big = MatrixXd::Zero(m * q, m * q);
  for (int k = 0; k < q; ++k)
    big.block(k * m, k * m, m, m) = per_outcome_[k].cond_cov;
  return big;
}

// ---------------------------------------------------------------------------
// B-spline basis prior

namespace {

// Cox-de Boor for clamped cubic splines; returns the K basis values at x.
VectorXd bspline_row(double x, const VectorXd& knots, int basis_count) {
  constexpr int kOrder = 4;  // cubic
  const int m = static_cast<int>(knots.size());
  double lo = knots[0], hi = knots[m - 1];
  if (x <= lo) x = lo;
  if (x >= hi) x = hi - 1e-12 * std::max(1.0, std::abs(hi));

  VectorXd b = VectorXd::Zero(m - 1);
  for (int i = 0; i < m - 1; ++i)
    b[i] = (x >= knots[i] && x < knots[i + 1]) ? 1.0 : 0.0;
  for (int k = 2; k <= kOrder; ++k) {
    for (int i = 0; i + k < m; ++i) {
      double left = 0.0, right = 0.0;
      double dl = knots[i + k - 1] - knots[i];
      double dr = knots[i + k] - knots[i + 1];
      if (dl > 0.0) left = (x - knots[i]) / dl * b[i];
      if (dr > 0.0) right = (knots[i + k] - x) / dr * b[i + 1];
      b[i] = left + right;
    }
  }
  return b.head(basis_count);
}

VectorXd clamped_uniform_knots(double a, double b, int basis_count) {
  constexpr int kOrder = 4;
  int interior = basis_count - kOrder;
  VectorXd knots(basis_count + kOrder);
  for (int i = 0; i < kOrder; ++i) {
    knots[i] = a;
    knots[basis_count + kOrder - 1 - i] = b;
  }
  for (int i = 0; i < interior; ++i)
    knots[kOrder + i] = a + (b - a) * (i + 1) / (interior + 1);
  return knots;
}

}  // namespace

BasisExpansionPrior::BasisExpansionPrior(Design design, QuadratureRulePtr rule,
                                         int basis_size, double tau2,
                                         VectorXd noise_variances,
                                         WarningList* warnings)
    : design_(std::move(design)),
      rule_(std::move(rule)),
      raw_basis_size_(basis_size),
      tau2_(tau2),
      noise_variances_(std::move(noise_variances)),
      warnings_(warnings) {
  if (basis_size < 4)
    throw ContractError("BasisExpansionPrior: need at least 4 basis functions");
  if (tau2 <= 0.0) throw ContractError("BasisExpansionPrior: tau2 must be > 0");
  if (design_.dim() != 1 || rule_->dim() != 1)
    throw ContractError("BasisExpansionPrior: one-dimensional domains only");
  knots_ = clamped_uniform_knots(design_.domain.lo[0], design_.domain.hi[0],
                                 basis_size);
  coef_basis_ = MatrixXd::Identity(basis_size, basis_size);
  rebuild_design_matrices();
}

BasisExpansionPrior::BasisExpansionPrior(const BasisExpansionPrior& other,
                                         MatrixXd coef_basis)
    : design_(other.design_),
      rule_(other.rule_),
      raw_basis_size_(other.raw_basis_size_),
      tau2_(other.tau2_),
      noise_variances_(other.noise_variances_),
      knots_(other.knots_),
      coef_basis_(std::move(coef_basis)),
      warnings_(other.warnings_) {
  rebuild_design_matrices();
}

MatrixXd BasisExpansionPrior::raw_basis_at(const MatrixXd& points) const {
  MatrixXd B(points.rows(), raw_basis_size_);
  for (int i = 0; i < points.rows(); ++i)
    B.row(i) = bspline_row(points(i, 0), knots_, raw_basis_size_).transpose();
  return B;
}

MatrixXd BasisExpansionPrior::basis_at(const MatrixXd& points) const {
  return raw_basis_at(points) * coef_basis_;
}

void BasisExpansionPrior::rebuild_design_matrices() {
  design_mat_ = basis_at(design_.points);
  grid_mat_ = basis_at(rule_->nodes);

  const int ke = static_cast<int>(coef_basis_.cols());
  posterior_llt_.clear();
  posterior_cov_.clear();
  for (int k = 0; k < outcomes(); ++k) {
    double nv = std::max(noise_variances_[k], 1e-12);
    MatrixXd precision =
        design_mat_.transpose() * design_mat_ / nv +
        MatrixXd::Identity(ke, ke) / tau2_;
    Eigen::LLT<MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) {
      warn(warnings_, Severity::warning,
           "BasisExpansionPrior: ill-conditioned basis Gram, adding ridge");
      precision.diagonal().array() += 1e-8 * precision.trace() / ke;
      llt.compute(precision);
      if (llt.info() != Eigen::Success)
        throw NumericalError("BasisExpansionPrior: precision factorization failed");
    }
    posterior_llt_.push_back(llt);
    posterior_cov_.push_back(llt.solve(MatrixXd::Identity(ke, ke)));
  }
}

std::pair<VectorXd, MatrixXd> BasisExpansionPrior::coefficient_posterior(
    const VectorXd& residuals_k, int k) const {
  double nv = std::max(noise_variances_[k], 1e-12);
  VectorXd mean =
      posterior_llt_.at(k).solve(design_mat_.transpose() * residuals_k / nv);
  return {mean, posterior_cov_.at(k)};
}

BiasDraw BasisExpansionPrior::conditional_draw(const MatrixXd& residuals,
                                               Rng& rng) const {
  if (residuals.rows() != design_.size() || residuals.cols() != outcomes())
    throw DimensionError("BasisExpansionPrior: residual shape mismatch");
  BiasDraw draw;
  draw.design_values.resize(design_.size(), outcomes());
  MatrixXd grid(rule_->size(), outcomes());
  for (int k = 0; k < outcomes(); ++k) {
    auto [mean, cov] = coefficient_posterior(residuals.col(k), k);
    VectorXd coef = cholesky_sample(mean, cov, rng, {1e-12, 3});
    draw.design_values.col(k) = design_mat_ * coef;
    grid.col(k) = grid_mat_ * coef;
  }
  draw.grid_values = GridFunction(std::move(grid), rule_);
  draw.provenance = BiasDraw::Provenance::raw;
  return draw;
}

MatrixXd BasisExpansionPrior::evaluate(const BiasDraw& draw,
                                       const MatrixXd& points) const {
  // recover coefficients from the grid values (least squares; exact for
  // draws produced by this prior)
  MatrixXd B = basis_at(points);
  MatrixXd out(points.rows(), outcomes());
  for (int k = 0; k < outcomes(); ++k) {
    VectorXd coef = grid_mat_.colPivHouseholderQr().solve(
        draw.grid_values.values.col(k));
    out.col(k) = B * coef;
  }
  return out;
}

MatrixXd BasisExpansionPrior::conditional_covariance() const {
  const int n = design_.size();
  const int g = rule_->size();
  const int m = n + g;
  const int q = outcomes();
  MatrixXd stacked(m, coef_basis_.cols());
  stacked.topRows(n) = design_mat_;
  stacked.bottomRows(g) = grid_mat_;
  MatrixXd big = MatrixXd::Zero(m * q, m * q);
  for (int k = 0; k < q; ++k)
    big.block(k * m, k * m, m, m) =
        stacked * posterior_cov_[k] * stacked.transpose();
  return big;
}

std::shared_ptr<BasisExpansionPrior> BasisExpansionPrior::restricted_to_nullspace(
    const MatrixXd& M) const {
  if (M.cols() != coef_basis_.cols())
    throw DimensionError("restricted_to_nullspace: column count mismatch");
  Eigen::FullPivLU<MatrixXd> lu(M);
  lu.setThreshold(1e-10);
  MatrixXd null_basis = lu.kernel();
  if (null_basis.cols() == 0)
    throw ContractError("restricted_to_nullspace: constraints leave no freedom");
  return std::shared_ptr<BasisExpansionPrior>(
      new BasisExpansionPrior(*this, MatrixXd(coef_basis_ * null_basis)));
}

// ---------------------------------------------------------------------------
// Orthogonalized GP kernel

CovarianceFn ogp_kernel(const CovarianceFn& base, const ConstraintSet& cs,
                        const QuadratureRulePtr& rule, int outcome,
                        WarningList* warnings) {
  if (cs.constraints() == 0)
    throw ContractError("ogp_kernel: empty constraint set");
  if (outcome < 0 || outcome >= cs.outcomes())
    throw DimensionError("ogp_kernel: outcome index out of range");
  const int N = rule->size();
  const int p = cs.constraints();
  for (const auto& g : cs.gradients)
    if (!same_rule(*g.rule, *rule))
      throw DimensionError("ogp_kernel: constraint gradients on a different rule");

  MatrixXd weighted_grads(N, p);  // columns w .* g_j
  for (int j = 0; j < p; ++j)
    weighted_grads.col(j) =
        rule->weights.array() * cs.gradients[j].values.col(outcome).array();

  MatrixXd K(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = i; j < N; ++j) {
      double v = base(rule->nodes.row(i).transpose(),
                      rule->nodes.row(j).transpose());
      K(i, j) = v;
      K(j, i) = v;
    }
  MatrixXd H = weighted_grads.transpose() * K * weighted_grads;
  H = 0.5 * (H + H.transpose());

  // pseudo-inverse; zero gradients give a zero correction
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(H);
  double ev_max = es.eigenvalues().maxCoeff();
  VectorXd inv = VectorXd::Zero(p);
  bool degenerate = false;
  for (int i = 0; i < p; ++i) {
    if (es.eigenvalues()[i] > 1e-12 * std::max(ev_max, 0.0) &&
        es.eigenvalues()[i] > 0.0)
      inv[i] = 1.0 / es.eigenvalues()[i];
    else
      degenerate = true;
  }
  if (degenerate)
    warn(warnings, Severity::warning,
         "ogp_kernel: gradient functional covariance numerically singular");
  MatrixXd H_pinv =
      es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();

  MatrixXd nodes = rule->nodes;
  return [base, nodes, weighted_grads, H_pinv](const VectorXd& x,
                                               const VectorXd& y) {
    const int N = static_cast<int>(nodes.rows());
    VectorXd cx(N), cy(N);
    for (int i = 0; i < N; ++i) {
      cx[i] = base(x, nodes.row(i).transpose());
      cy[i] = base(y, nodes.row(i).transpose());
    }
    VectorXd hx = weighted_grads.transpose() * cx;
    VectorXd hy = weighted_grads.transpose() * cy;
    return base(x, y) - hx.dot(H_pinv * hy);
  };
}

BiasDraw gp_conditional_draw(const MaternKernel& kernel, const Design& design,
                             const MatrixXd& residuals, const NoiseModel& noise,
                             const QuadratureRulePtr& rule, Rng& rng) {
  GpBiasPrior prior(design, rule, kernel, noise);
  return prior.conditional_draw(residuals, rng);
}

BiasDraw basis_conditional_draw(const BasisExpansionPrior& prior,
                                const MatrixXd& residuals, Rng& rng) {
  return prior.conditional_draw(residuals, rng);
}

}  // namespace orthocal
