#pragma once

#include <functional>
#include <optional>

#include "orthocal/numerics.hpp"

namespace orthocal {

// Input locations x_1..x_n in the controllable-input space X.
struct Design {
  MatrixXd points;  // n x d
  Box domain;

  Design() = default;
  Design(MatrixXd points_, Box domain_);
  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return domain.dim(); }
};

Design uniform_design(int n, const Box& domain, Rng& rng);

// q-variate measurements of the physical system at the design points.
struct FieldObservations {
  Design design;
  MatrixXd values;  // n x q

  FieldObservations() = default;
  FieldObservations(Design design_, MatrixXd values_);
  int size() const { return design.size(); }
  int outcomes() const { return static_cast<int>(values.cols()); }
};

// Measurement-error covariance (known or plug-in).
struct NoiseModel {
  MatrixXd sigma;  // q x q SPD

  NoiseModel() = default;
  explicit NoiseModel(MatrixXd sigma_);
  static NoiseModel iid(double variance, int q);
  int outcomes() const { return static_cast<int>(sigma.rows()); }
  MatrixXd inv_sqrt() const { return matrix_inv_sqrt(sigma); }
};

enum class GradientMode { analytic, finite_difference };

// Simulator f : X x Theta -> R^q with parameter-gradient access.
//
// eval_batch is optional; surrogates install a fast path, exact models fall
// back to a loop over eval. Evaluation must be safe for concurrent calls on
// immutable state.
struct ComputerModel {
  using EvalFn = std::function<VectorXd(const VectorXd& x, const VectorXd& t)>;
  using BatchFn =
      std::function<MatrixXd(const MatrixXd& X, const VectorXd& t)>;
  using GradFn = std::function<VectorXd(int j, const VectorXd& x,
                                        const VectorXd& t)>;

  EvalFn eval_fn;
  BatchFn batch_fn;          // optional
  GradFn analytic_gradient;  // required iff gradient_mode == analytic
  Box theta_domain;
  int outputs = 1;
  GradientMode gradient_mode = GradientMode::finite_difference;
  double fd_step_rel = 1e-5;  // times the per-axis Theta width

  int params() const { return theta_domain.dim(); }

  VectorXd eval(const VectorXd& x, const VectorXd& t) const;
  // Rows of X are input points; returns |X| x q.
  MatrixXd eval_batch(const MatrixXd& X, const VectorXd& t) const;
  // d f(x, t) / d t_j, analytic or central differences (one-sided at the
  // Theta boundary).
  VectorXd gradient(int j, const VectorXd& x, const VectorXd& t) const;
};

// Wrap a model so that outputs (and gradients) are premultiplied by W.
ComputerModel transformed_model(const ComputerModel& m, const MatrixXd& W);

// g_j(. , t) = (g_{j,1}, ..., g_{j,q}) on the rule nodes. j is 1-based.
GridFunction model_gradient(const ComputerModel& m, int j, const VectorXd& t,
                            const QuadratureRulePtr& rule);

// Orthogonality-constraint data at a fixed anchor: the p gradient functions
// and their Gram matrix Q_{jj'} = sum_k <g_{j,k}, g_{j',k}>.
struct ConstraintSet {
  VectorXd anchor;
  std::vector<GridFunction> gradients;    // p functions on the shared rule
  std::vector<MatrixXd> design_gradients; // p matrices (n x q), optional
  MatrixXd gram;                          // p x p
  double gram_condition = 0.0;
  bool rank_warning = false;

  int constraints() const { return static_cast<int>(gradients.size()); }
  int outcomes() const {
    return gradients.empty() ? 0 : gradients.front().outcomes();
  }
  bool has_design_gradients() const { return !design_gradients.empty(); }
};

ConstraintSet build_constraint_set(const ComputerModel& m,
                                   const VectorXd& anchor,
                                   const QuadratureRulePtr& rule,
                                   WarningList* warnings = nullptr);

// Same, plus gradient evaluations at the design points (needed to correct
// bias values at the design during projection).
ConstraintSet build_constraint_set(const ComputerModel& m,
                                   const VectorXd& anchor,
                                   const QuadratureRulePtr& rule,
                                   const Design& design,
                                   WarningList* warnings = nullptr);

// y_i = truth(x_i) + eps_i with eps_i iid N_q(0, Sigma_F).
FieldObservations sample_field_data(
    const std::function<VectorXd(const VectorXd&)>& truth,
    const NoiseModel& noise, const Design& design, Rng& rng);

}  // namespace orthocal
