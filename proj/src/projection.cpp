#include "orthocal/projection.hpp"

#include <cmath>

namespace orthocal {

std::pair<BiasDraw, ProjectionReport> functional_project(const BiasDraw& b,
                                                         const ConstraintSet& cs,
                                                         WarningList* warnings) {
  const int p = cs.constraints();
  if (p == 0) throw ContractError("functional_project: empty constraint set");
  for (const auto& g : cs.gradients) {
    if (!same_rule(*g.rule, *b.grid_values.rule))
      throw DimensionError("functional_project: rule mismatch");
    if (g.outcomes() != b.outcomes())
      throw DimensionError("functional_project: outcome mismatch");
  }
  const bool with_design = b.design_values.rows() > 0;
  if (with_design && !cs.has_design_gradients())
    throw ContractError(
        "functional_project: constraint set lacks design-point gradients");

  VectorXd eta(p);
  for (int j = 0; j < p; ++j)
    eta[j] = inner_product(b.grid_values, cs.gradients[j]);

  ProjectionReport report;
  SpdSolveInfo info;
  report.lambda = solve_spd(cs.gram, eta, &info, warnings);
  report.gram_condition = info.condition;
  report.pseudo_inverse = info.pseudo_inverse;

  BiasDraw out = b;
  for (int j = 0; j < p; ++j) {
    out.grid_values.values -= report.lambda[j] * cs.gradients[j].values;
    if (with_design)
      out.design_values -= report.lambda[j] * cs.design_gradients[j];
  }
  out.provenance = BiasDraw::Provenance::projected;

  report.constraint_residuals.resize(p);
  double b_norm = norm(b.grid_values);
  double max_rel = 0.0;
  for (int j = 0; j < p; ++j) {
    double r = inner_product(out.grid_values, cs.gradients[j]);
    report.constraint_residuals[j] = r;
    double scale = b_norm * norm(cs.gradients[j]);
    if (scale > 0.0) max_rel = std::max(max_rel, std::abs(r) / scale);
  }
  report.max_relative_residual = max_rel;
  return {std::move(out), std::move(report)};
}

ConstrainedGaussian finite_dim_project_gaussian(const VectorXd& mean,
                                                const MatrixXd& cov,
                                                const MatrixXd& A,
                                                WarningList* warnings) {
  const int n = static_cast<int>(mean.size());
  if (cov.rows() != n || cov.cols() != n || A.rows() != n)
    throw ContractError("finite_dim_project_gaussian: dimension mismatch");
  const int p = static_cast<int>(A.cols());

  MatrixXd SA = cov * A;                      // n x p
  MatrixXd gram = A.transpose() * SA;         // A^T cov A
  gram = 0.5 * (gram + gram.transpose());

  SpdSolveInfo info;
  MatrixXd solved(p, n + 1);
  {
    MatrixXd rhs(p, n + 1);
    rhs.leftCols(n) = SA.transpose();         // A^T cov
    rhs.col(n) = A.transpose() * mean;        // A^T mu
    for (int c = 0; c <= n; ++c)
      solved.col(c) = solve_spd(gram, rhs.col(c), &info,
                                c == 0 ? warnings : nullptr);
  }

  ConstrainedGaussian out;
  out.pseudo_inverse = info.pseudo_inverse;
  out.mean = mean - SA * solved.col(n);
  out.cov = cov - SA * solved.leftCols(n);
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

MatrixXd whitened_projector(const MatrixXd& cov, const MatrixXd& A,
                            WarningList* warnings) {
  const int n = static_cast<int>(cov.rows());
  if (A.rows() != n) throw ContractError("whitened_projector: shape mismatch");
  MatrixXd sqrt_cov = matrix_sqrt(cov);
  MatrixXd inv_sqrt_cov = matrix_inv_sqrt(cov);

  MatrixXd B = sqrt_cov * A;
  MatrixXd gram = B.transpose() * B;
  gram = 0.5 * (gram + gram.transpose());
  const int p = static_cast<int>(A.cols());
  SpdSolveInfo info;
  MatrixXd solved(p, n);
  for (int c = 0; c < n; ++c)
    solved.col(c) = solve_spd(gram, B.transpose().col(c), &info,
                              c == 0 ? warnings : nullptr);
  MatrixXd pb = B * solved;  // projector onto col(B)
  return sqrt_cov * (MatrixXd::Identity(n, n) - pb) * inv_sqrt_cov;
}

VectorXd whitened_project_sample(const VectorXd& x, const MatrixXd& cov,
                                 const MatrixXd& A, WarningList* warnings) {
  if (x.size() != cov.rows())
    throw ContractError("whitened_project_sample: dimension mismatch");
  return whitened_projector(cov, A, warnings) * x;
}

VectorXd stack_bias(const BiasDraw& draw) {
  const int n = static_cast<int>(draw.design_values.rows());
  const int g = static_cast<int>(draw.grid_values.values.rows());
  const int q = draw.outcomes();
  VectorXd v((n + g) * q);
  for (int k = 0; k < q; ++k) {
    v.segment(k * (n + g), n) = draw.design_values.col(k);
    v.segment(k * (n + g) + n, g) = draw.grid_values.values.col(k);
  }
  return v;
}

BiasDraw unstack_bias(const VectorXd& v, int n_design,
                      const QuadratureRulePtr& rule, int q) {
  const int g = rule->size();
  if (v.size() != static_cast<long>(n_design + g) * q)
    throw DimensionError("unstack_bias: size mismatch");
  BiasDraw draw;
  draw.design_values.resize(n_design, q);
  MatrixXd grid(g, q);
  for (int k = 0; k < q; ++k) {
    draw.design_values.col(k) = v.segment(k * (n_design + g), n_design);
    grid.col(k) = v.segment(k * (n_design + g) + n_design, g);
  }
  draw.grid_values = GridFunction(std::move(grid), rule);
  return draw;
}

MatrixXd stacked_constraint_matrix(const ConstraintSet& cs, int n_design,
                                   MomentConstraintMode mode) {
  const int p = cs.constraints();
  const int q = cs.outcomes();
  const auto& rule = *cs.gradients.front().rule;
  const int g = rule.size();
  const int block = n_design + g;
  MatrixXd G = MatrixXd::Zero(static_cast<long>(block) * q, p);
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < q; ++k) {
      if (mode == MomentConstraintMode::quadrature) {
        G.col(j).segment(k * block + n_design, g) =
            rule.weights.array() * cs.gradients[j].values.col(k).array();
      } else {
        if (!cs.has_design_gradients())
          throw ContractError(
              "stacked_constraint_matrix: design gradients unavailable");
        G.col(j).segment(k * block, n_design) = cs.design_gradients[j].col(k);
      }
    }
  }
  return G;
}

double stacked_constraint_residual(const VectorXd& v, const MatrixXd& G) {
  double vn = v.norm();
  double worst = 0.0;
  for (int j = 0; j < G.cols(); ++j) {
    double scale = vn * G.col(j).norm();
    if (scale > 0.0)
      worst = std::max(worst, std::abs(G.col(j).dot(v)) / scale);
  }
  return worst;
}

BiasDraw moment_project_nongaussian(const BiasPrior& prior,
                                    const MatrixXd& residuals,
                                    const ConstraintSet& cs, int M, Rng& rng,
                                    const MomentProjectionOptions& opts,
                                    WarningList* warnings) {
  const int n = prior.design_size();
  const int g = prior.grid_size();
  const int q = prior.outcomes();
  const long dim = static_cast<long>(n + g) * q;
  if (M < 10 * dim)
    throw ContractError(
        "moment_project_nongaussian: need M >= 10x the stacked dimension");

  MatrixXd draws(dim, M);
  for (int m = 0; m < M; ++m)
    draws.col(m) = stack_bias(prior.conditional_draw(residuals, rng));

  VectorXd beta = draws.rowwise().mean();
  MatrixXd centered = draws.colwise() - beta;
  MatrixXd phi = centered * centered.transpose() / (M - 1.0);
  phi = 0.5 * (phi + phi.transpose());

  double ridge = opts.ridge_rel * std::max(phi.trace() / dim, 1e-300);
  for (int attempt = 0;; ++attempt) {
    MatrixXd test = phi;
    test.diagonal().array() += ridge;
    if (Eigen::LLT<MatrixXd>(test).info() == Eigen::Success) {
      phi = test;
      break;
    }
    if (attempt >= 4)
      throw NumericalError(
          "moment_project_nongaussian: sample covariance not factorizable");
    warn(warnings, Severity::warning,
         "moment_project_nongaussian: escalating covariance ridge");
    ridge *= 10.0;
  }

  MatrixXd G = stacked_constraint_matrix(cs, n, opts.mode);
  MatrixXd projector = whitened_projector(phi, G, warnings);

  VectorXd fresh = stack_bias(prior.conditional_draw(residuals, rng));
  VectorXd projected = projector * fresh;

  BiasDraw out = unstack_bias(projected, n, cs.gradients.front().rule, q);
  out.provenance = BiasDraw::Provenance::projected;
  return out;
}

}  // namespace orthocal
