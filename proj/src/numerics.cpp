#include "orthocal/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace orthocal {

namespace {

// Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix of the
// Legendre recurrence, weights 2 * v[0]^2 on [-1, 1].
void legendre_nodes(int n, VectorXd& nodes, VectorXd& weights) {
  MatrixXd jacobi = MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    double beta = i / std::sqrt(4.0 * i * i - 1.0);
    jacobi(i, i - 1) = beta;
    jacobi(i - 1, i) = beta;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(jacobi);
  nodes = es.eigenvalues();
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double v0 = es.eigenvectors()(0, i);
    weights[i] = 2.0 * v0 * v0;
  }
}

}  // namespace

QuadratureRulePtr gauss_legendre_rule(int points_per_axis, const Box& domain) {
  if (points_per_axis < 2)
    throw ConfigError("gauss_legendre_rule: need at least 2 points per axis");
  domain.validate();

  const int d = domain.dim();
  VectorXd ref_nodes, ref_weights;
  legendre_nodes(points_per_axis, ref_nodes, ref_weights);

  // Per-axis affine map to [a_i, b_i], then tensor product.
  std::vector<VectorXd> axis_nodes(d), axis_weights(d);
  for (int a = 0; a < d; ++a) {
    double mid = 0.5 * (domain.lo[a] + domain.hi[a]);
    double half = 0.5 * domain.width(a);
    axis_nodes[a] = (ref_nodes.array() * half + mid).matrix();
    axis_weights[a] = ref_weights * half;
  }

  long total = 1;
  for (int a = 0; a < d; ++a) total *= points_per_axis;

  auto rule = std::make_shared<QuadratureRule>();
  rule->domain = domain;
  rule->points_per_axis = points_per_axis;
  rule->nodes.resize(total, d);
  rule->weights.resize(total);
  std::vector<int> idx(d, 0);
  for (long r = 0; r < total; ++r) {
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      rule->nodes(r, a) = axis_nodes[a][idx[a]];
      w *= axis_weights[a][idx[a]];
    }
    rule->weights[r] = w;
    for (int a = d - 1; a >= 0; --a) {
      if (++idx[a] < points_per_axis) break;
      idx[a] = 0;
    }
  }
  return rule;
}

GridFunction::GridFunction(MatrixXd values_, QuadratureRulePtr rule_)
    : values(std::move(values_)), rule(std::move(rule_)) {
  if (!rule) throw DimensionError("GridFunction: null rule");
  if (values.rows() != rule->size())
    throw DimensionError("GridFunction: row count must equal rule node count");
  if (!values.allFinite())
    throw ContractError("GridFunction: non-finite values");
}

GridFunction& GridFunction::operator+=(const GridFunction& other) {
  if (!same_rule(*rule, *other.rule) || outcomes() != other.outcomes())
    throw DimensionError("GridFunction: mismatched rule or outcome count");
  values += other.values;
  return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& other) {
  if (!same_rule(*rule, *other.rule) || outcomes() != other.outcomes())
    throw DimensionError("GridFunction: mismatched rule or outcome count");
  values -= other.values;
  return *this;
}

GridFunction& GridFunction::operator*=(double a) {
  values *= a;
  return *this;
}

GridFunction tabulate(const std::function<VectorXd(const VectorXd&)>& f,
                      const QuadratureRulePtr& rule) {
  VectorXd first = f(rule->nodes.row(0).transpose());
  MatrixXd values(rule->size(), first.size());
  values.row(0) = first.transpose();
  for (int i = 1; i < rule->size(); ++i)
    values.row(i) = f(rule->nodes.row(i).transpose()).transpose();
  return GridFunction(std::move(values), rule);
}

bool same_rule(const QuadratureRule& a, const QuadratureRule& b) {
  if (&a == &b) return true;
  return a.nodes.rows() == b.nodes.rows() && a.nodes.cols() == b.nodes.cols() &&
         a.nodes == b.nodes && a.weights == b.weights;
}

double inner_product(const GridFunction& f, const GridFunction& g) {
  if (!f.rule || !g.rule || !same_rule(*f.rule, *g.rule))
    throw DimensionError("inner_product: functions must share a rule");
  if (f.outcomes() != g.outcomes())
    throw DimensionError("inner_product: outcome count mismatch");
  double total = 0.0;
  for (int k = 0; k < f.outcomes(); ++k)
    total += (f.rule->weights.array() * f.values.col(k).array() *
              g.values.col(k).array())
                 .sum();
  return total;
}

double norm(const GridFunction& f) {
  return std::sqrt(std::max(0.0, inner_product(f, f)));
}

VectorXd solve_spd(const MatrixXd& Q, const VectorXd& rhs, SpdSolveInfo* info,
                   WarningList* warnings) {
  const int p = static_cast<int>(Q.rows());
  if (Q.cols() != p || rhs.size() != p)
    throw DimensionError("solve_spd: shape mismatch");
  double scale = Q.cwiseAbs().maxCoeff();
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0))
    throw ContractError("solve_spd: matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Q);
  const VectorXd& ev = es.eigenvalues();
  double ev_max = ev[p - 1];
  double ev_min = ev[0];
  bool degenerate = !(ev_min > 1e-12 * std::max(ev_max, 0.0)) || ev_max <= 0.0;
  if (info) {
    info->pseudo_inverse = degenerate;
    info->condition = (ev_min > 0.0 && ev_max > 0.0)
                          ? ev_max / ev_min
                          : std::numeric_limits<double>::infinity();
  }

  if (!degenerate) {
    return Eigen::LDLT<MatrixXd>(Q).solve(rhs);
  }

  warn(warnings, Severity::warning,
       "solve_spd: rank-deficient system, using pseudo-inverse");
  VectorXd y = es.eigenvectors().transpose() * rhs;
  double cutoff = 1e-12 * std::max(ev_max, 0.0);
  for (int i = 0; i < p; ++i) y[i] = ev[i] > cutoff ? y[i] / ev[i] : 0.0;
  return es.eigenvectors() * y;
}

MatrixXd jittered_cholesky(const MatrixXd& cov, const JitterPolicy& policy) {
  const int n = static_cast<int>(cov.rows());
  if (cov.cols() != n) throw DimensionError("jittered_cholesky: not square");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() >
      1e-8 * std::max(cov.cwiseAbs().maxCoeff(), 1.0))
    throw ContractError("jittered_cholesky: covariance not symmetric");

  double base = policy.initial_rel * std::max(cov.trace() / n, 0.0);
  if (base <= 0.0) base = policy.initial_rel;

  double jitter = base;
  MatrixXd work = cov;
  for (int attempt = 0; attempt <= policy.escalations; ++attempt) {
    work = cov;
    work.diagonal().array() += jitter;
    Eigen::LLT<MatrixXd> llt(work);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    jitter *= 10.0;
  }
  throw NumericalError("cholesky factorization failed after jitter escalation");
}

VectorXd cholesky_sample(const VectorXd& mean, const MatrixXd& cov, Rng& rng,
                         const JitterPolicy& policy) {
  if (mean.size() != cov.rows())
    throw DimensionError("cholesky_sample: mean/cov size mismatch");
  MatrixXd L = jittered_cholesky(cov, policy);
  VectorXd z(mean.size());
  for (int i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
  return mean + L * z;
}

MatrixXd matrix_sqrt(const MatrixXd& spd) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(spd);
  VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

MatrixXd matrix_inv_sqrt(const MatrixXd& spd) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(spd);
  VectorXd ev = es.eigenvalues();
  double ev_max = ev.maxCoeff();
  if (ev_max <= 0.0) throw NumericalError("matrix_inv_sqrt: not positive");
  VectorXd inv = ev;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] <= 1e-14 * ev_max)
      throw NumericalError("matrix_inv_sqrt: singular matrix");
    inv[i] = 1.0 / std::sqrt(ev[i]);
  }
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace orthocal
