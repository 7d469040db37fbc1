#pragma once

#include <functional>
#include <memory>

#include "orthocal/common.hpp"

namespace orthocal {

// Tensor-product Gauss-Legendre rule on an axis-aligned box.
// weights are strictly positive and sum to the box volume.
struct QuadratureRule {
  MatrixXd nodes;    // N x d
  VectorXd weights;  // N
  Box domain;
  int points_per_axis = 0;

  int size() const { return static_cast<int>(weights.size()); }
  int dim() const { return domain.dim(); }
};

using QuadratureRulePtr = std::shared_ptr<const QuadratureRule>;

// Exact for per-axis polynomial degree <= 2*points_per_axis - 1.
QuadratureRulePtr gauss_legendre_rule(int points_per_axis, const Box& domain);

// q-variate function sampled on the nodes of a quadrature rule.
struct GridFunction {
  MatrixXd values;  // N x q
  QuadratureRulePtr rule;

  GridFunction() = default;
  GridFunction(MatrixXd values_, QuadratureRulePtr rule_);

  int outcomes() const { return static_cast<int>(values.cols()); }

  GridFunction& operator+=(const GridFunction& other);
  GridFunction& operator-=(const GridFunction& other);
  GridFunction& operator*=(double a);
};

GridFunction tabulate(const std::function<VectorXd(const VectorXd&)>& f,
                      const QuadratureRulePtr& rule);

bool same_rule(const QuadratureRule& a, const QuadratureRule& b);

// <f, g> = sum_k integral f_k g_k dx, discretized on the shared rule.
double inner_product(const GridFunction& f, const GridFunction& g);

// Induced norm sqrt(<f, f>).
double norm(const GridFunction& f);

struct SpdSolveInfo {
  bool pseudo_inverse = false;  // rank-deficiency fallback used
  double condition = 0.0;       // eigenvalue ratio estimate
};

// Solve Q x = rhs for symmetric Q. Positive definite systems go through
// LDLT; when the smallest eigenvalue drops below 1e-12 * largest the solve
// falls back to an eigenvalue pseudo-inverse and flags info/warnings.
VectorXd solve_spd(const MatrixXd& Q, const VectorXd& rhs,
                   SpdSolveInfo* info = nullptr, WarningList* warnings = nullptr);

struct JitterPolicy {
  double initial_rel = 1e-8;  // times trace/n
  int escalations = 3;        // x10 each before giving up
};

// Draw from N(mean, cov + jitter I). Deterministic given the rng state.
VectorXd cholesky_sample(const VectorXd& mean, const MatrixXd& cov, Rng& rng,
                         const JitterPolicy& policy = {});

// Lower Cholesky factor of cov + jitter I (shared by the samplers).
MatrixXd jittered_cholesky(const MatrixXd& cov, const JitterPolicy& policy = {});

// Symmetric square root and inverse square root via eigendecomposition.
MatrixXd matrix_sqrt(const MatrixXd& spd);
MatrixXd matrix_inv_sqrt(const MatrixXd& spd);

}  // namespace orthocal
