#include "orthocal/model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace orthocal {

Design::Design(MatrixXd points_, Box domain_)
    : points(std::move(points_)), domain(std::move(domain_)) {
  if (points.rows() < 1) throw ContractError("Design: need n >= 1 points");
  if (points.cols() != domain.dim())
    throw DimensionError("Design: point dimension mismatch");
  for (int i = 0; i < points.rows(); ++i) {
    if (!domain.contains(points.row(i).transpose(), 1e-12))
      throw ContractError("Design: point outside the domain");
  }
}

Design uniform_design(int n, const Box& domain, Rng& rng) {
  MatrixXd pts(n, domain.dim());
  for (int i = 0; i < n; ++i) pts.row(i) = domain.sample(rng).transpose();
  return Design(std::move(pts), domain);
}

FieldObservations::FieldObservations(Design design_, MatrixXd values_)
    : design(std::move(design_)), values(std::move(values_)) {
  if (values.rows() != design.size())
    throw DimensionError("FieldObservations: row count must equal n");
  if (values.cols() < 1) throw ContractError("FieldObservations: need q >= 1");
  if (!values.allFinite())
    throw ContractError("FieldObservations: non-finite values");
}

NoiseModel::NoiseModel(MatrixXd sigma_) : sigma(std::move(sigma_)) {
  const int q = static_cast<int>(sigma.rows());
  if (sigma.cols() != q || q < 1)
    throw DimensionError("NoiseModel: covariance must be square");
  double scale = std::max(sigma.cwiseAbs().maxCoeff(), 1.0);
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw ContractError("NoiseModel: covariance not symmetric");
  // PSD is enough here (zero noise is a legal generator); inv_sqrt enforces
  // strict positivity where an inverse is actually taken.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw ContractError("NoiseModel: covariance not positive semi-definite");
}

NoiseModel NoiseModel::iid(double variance, int q) {
  if (variance < 0.0) throw ContractError("NoiseModel: variance must be >= 0");
  return NoiseModel(variance * MatrixXd::Identity(q, q));
}

VectorXd ComputerModel::eval(const VectorXd& x, const VectorXd& t) const {
  VectorXd y = eval_fn(x, t);
  if (y.size() != outputs)
    throw ModelEvalError("ComputerModel: output dimension mismatch");
  if (!y.allFinite()) throw ModelEvalError("ComputerModel: non-finite output");
  return y;
}

MatrixXd ComputerModel::eval_batch(const MatrixXd& X, const VectorXd& t) const {
  if (batch_fn) {
    MatrixXd Y = batch_fn(X, t);
    if (Y.rows() != X.rows() || Y.cols() != outputs)
      throw ModelEvalError("ComputerModel: batch output shape mismatch");
    return Y;
  }
  MatrixXd Y(X.rows(), outputs);
  for (int i = 0; i < X.rows(); ++i)
    Y.row(i) = eval(X.row(i).transpose(), t).transpose();
  return Y;
}

VectorXd ComputerModel::gradient(int j, const VectorXd& x,
                                 const VectorXd& t) const {
  const int p = params();
  if (j < 1 || j > p) throw ContractError("ComputerModel::gradient: bad index");
  if (gradient_mode == GradientMode::analytic) {
    if (!analytic_gradient)
      throw ContractError("ComputerModel: analytic gradients not supplied");
    return analytic_gradient(j, x, t);
  }
  double h = fd_step_rel * theta_domain.width(j - 1);
  VectorXd tp = t, tm = t;
  // central differences, shifted to one side at the Theta boundary
  double up = std::min(t[j - 1] + h, theta_domain.hi[j - 1]);
  double dn = std::max(t[j - 1] - h, theta_domain.lo[j - 1]);
  if (up - dn <= 0.0)
    throw ContractError("ComputerModel::gradient: degenerate step");
  tp[j - 1] = up;
  tm[j - 1] = dn;
  return (eval(x, tp) - eval(x, tm)) / (up - dn);
}

ComputerModel transformed_model(const ComputerModel& m, const MatrixXd& W) {
  if (W.cols() != m.outputs)
    throw DimensionError("transformed_model: W shape mismatch");
  ComputerModel out = m;
  out.outputs = static_cast<int>(W.rows());
  out.eval_fn = [base = m.eval_fn, W](const VectorXd& x, const VectorXd& t) {
    return VectorXd(W * base(x, t));
  };
  if (m.batch_fn) {
    out.batch_fn = [base = m.batch_fn, W](const MatrixXd& X,
                                          const VectorXd& t) {
      return MatrixXd(base(X, t) * W.transpose());
    };
  }
  if (m.analytic_gradient) {
    out.analytic_gradient = [base = m.analytic_gradient, W](
                                int j, const VectorXd& x, const VectorXd& t) {
      return VectorXd(W * base(j, x, t));
    };
  }
  return out;
}

GridFunction model_gradient(const ComputerModel& m, int j, const VectorXd& t,
                            const QuadratureRulePtr& rule) {
  MatrixXd values(rule->size(), m.outputs);
  for (int i = 0; i < rule->size(); ++i)
    values.row(i) = m.gradient(j, rule->nodes.row(i).transpose(), t).transpose();
  return GridFunction(std::move(values), rule);
}

namespace {

ConstraintSet assemble_constraints(const ComputerModel& m,
                                   const VectorXd& anchor,
                                   const QuadratureRulePtr& rule,
                                   const Design* design,
                                   WarningList* warnings) {
  if (!m.theta_domain.contains(anchor, 1e-9))
    throw ContractError("build_constraint_set: anchor outside Theta");
  const int p = m.params();
  ConstraintSet cs;
  cs.anchor = anchor;
  cs.gradients.reserve(p);
  for (int j = 1; j <= p; ++j)
    cs.gradients.push_back(model_gradient(m, j, anchor, rule));

  cs.gram.resize(p, p);
  for (int j = 0; j < p; ++j)
    for (int l = j; l < p; ++l) {
      double v = inner_product(cs.gradients[j], cs.gradients[l]);
      cs.gram(j, l) = v;
      cs.gram(l, j) = v;
    }

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cs.gram);
  double ev_max = es.eigenvalues().maxCoeff();
  double ev_min = es.eigenvalues().minCoeff();
  cs.gram_condition = (ev_min > 0.0 && ev_max > 0.0)
                          ? ev_max / ev_min
                          : std::numeric_limits<double>::infinity();
  cs.rank_warning = !(ev_min > 1e-12 * std::max(ev_max, 0.0));
  if (cs.rank_warning)
    warn(warnings, Severity::warning,
         "build_constraint_set: gradient Gram matrix numerically singular");

  if (design) {
    cs.design_gradients.reserve(p);
    for (int j = 1; j <= p; ++j) {
      MatrixXd g(design->size(), m.outputs);
      for (int i = 0; i < design->size(); ++i)
        g.row(i) =
            m.gradient(j, design->points.row(i).transpose(), anchor).transpose();
      cs.design_gradients.push_back(std::move(g));
    }
  }
  return cs;
}

}  // namespace

ConstraintSet build_constraint_set(const ComputerModel& m,
                                   const VectorXd& anchor,
                                   const QuadratureRulePtr& rule,
                                   WarningList* warnings) {
  return assemble_constraints(m, anchor, rule, nullptr, warnings);
}

ConstraintSet build_constraint_set(const ComputerModel& m,
                                   const VectorXd& anchor,
                                   const QuadratureRulePtr& rule,
                                   const Design& design,
                                   WarningList* warnings) {
  return assemble_constraints(m, anchor, rule, &design, warnings);
}

FieldObservations sample_field_data(
    const std::function<VectorXd(const VectorXd&)>& truth,
    const NoiseModel& noise, const Design& design, Rng& rng) {
  if (design.size() < 1) throw ContractError("sample_field_data: empty design");
  const int n = design.size();
  const int q = noise.outcomes();
  MatrixXd L = matrix_sqrt(noise.sigma);  // PSD-safe, Sigma may be singular
  MatrixXd values(n, q);
  for (int i = 0; i < n; ++i) {
    VectorXd mu = truth(design.points.row(i).transpose());
    if (mu.size() != q)
      throw DimensionError("sample_field_data: truth dimension mismatch");
    VectorXd z(q);
    for (int k = 0; k < q; ++k) z[k] = std_normal(rng);
    values.row(i) = (mu + L * z).transpose();
  }
  return FieldObservations(design, std::move(values));
}

}  // namespace orthocal
