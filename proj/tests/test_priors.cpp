#include <doctest.h>

#include <cmath>

#include "orthocal/models.hpp"
#include "orthocal/priors.hpp"
#include "testutil.hpp"

using namespace orthocal;

TEST_CASE("gp conditional mean vanishes for zero residuals") {
  Rng rng = make_rng(1);
  Design design = uniform_design(20, Box::interval(0.0, 1.0), rng);
  auto rule = gauss_legendre_rule(16, Box::interval(0.0, 1.0));
  // noise variance so large the data barely matter
  GpBiasPrior prior(design, rule, MaternKernel(1.0, 0.5),
                    NoiseModel::iid(1e6, 1));
  VectorXd zero = VectorXd::Zero(20);
  CHECK(prior.conditional_mean(zero, 0).cwiseAbs().maxCoeff() == 0.0);

  // and the Monte Carlo mean of draws is near zero
  MatrixXd residuals = MatrixXd::Zero(20, 1);
  VectorXd acc = VectorXd::Zero(20 + rule->size());
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    BiasDraw d = prior.conditional_draw(residuals, rng);
    acc.head(20) += d.design_values.col(0);
    acc.tail(rule->size()) += d.grid_values.values.col(0);
  }
  CHECK((acc / draws).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("one-point gp conditional matches the scalar formula") {
  MatrixXd pt(1, 1);
  pt << 0.4;
  Design design(pt, Box::interval(0.0, 1.0));
  auto rule = gauss_legendre_rule(8, Box::interval(0.0, 1.0));
  MaternKernel kernel(2.0, 0.5);
  const double noise_var = 0.25;
  GpBiasPrior prior(design, rule, kernel, NoiseModel::iid(noise_var, 1));

  const double r = 1.3;
  VectorXd res = VectorXd::Constant(1, r);
  VectorXd x1 = VectorXd::Constant(1, 0.4);
  VectorXd mean = prior.conditional_mean(res, 0);

  // exact check against C(x, x1) r / (C(x1, x1) + noise)
  for (int i = 0; i < rule->size(); ++i) {
    VectorXd x = rule->nodes.row(i).transpose();
    double expected = kernel(x, x1) * r / (kernel(x1, x1) + noise_var);
    CHECK(mean[1 + i] == doctest::Approx(expected).epsilon(1e-12));
  }

  // Monte Carlo agreement of the sampler with its own moments
  Rng rng = make_rng(23);
  MatrixXd residuals = MatrixXd::Constant(1, 1, r);
  const int draws = 10000;
  VectorXd acc = VectorXd::Zero(1 + rule->size());
  for (int i = 0; i < draws; ++i) {
    BiasDraw d = prior.conditional_draw(residuals, rng);
    acc[0] += d.design_values(0, 0);
    acc.tail(rule->size()) += d.grid_values.values.col(0);
  }
  acc /= draws;
  for (int i = 0; i < rule->size(); ++i) {
    double sd = std::sqrt(prior.conditional_cov(0)(1 + i, 1 + i));
    double se = sd / std::sqrt(static_cast<double>(draws));
    CHECK(std::abs(acc[1 + i] - mean[1 + i]) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("gp draws are reproducible from the seed") {
  Rng setup = make_rng(2);
  Design design = uniform_design(10, Box::interval(0.0, 1.0), setup);
  auto rule = gauss_legendre_rule(8, Box::interval(0.0, 1.0));
  GpBiasPrior prior(design, rule, MaternKernel(1.0, 0.5),
                    NoiseModel::iid(0.04, 1));
  MatrixXd residuals(10, 1);
  for (int i = 0; i < 10; ++i) residuals(i, 0) = std::sin(6.0 * i);
  Rng a = make_rng(77), b = make_rng(77);
  BiasDraw da = prior.conditional_draw(residuals, a);
  BiasDraw db = prior.conditional_draw(residuals, b);
  CHECK(da.design_values == db.design_values);
  CHECK(da.grid_values.values == db.grid_values.values);
}

TEST_CASE("gp draws interpolate the residuals as the noise vanishes") {
  Rng rng = make_rng(3);
  Design design = uniform_design(25, Box::interval(0.0, 1.0), rng);
  auto rule = gauss_legendre_rule(12, Box::interval(0.0, 1.0));
  GpPriorOptions opts;
  opts.jitter = {1e-12, 3};
  GpBiasPrior prior(design, rule,
                    std::vector<CovarianceFn>{MaternKernel(1.0, 0.5)},
                    VectorXd::Constant(1, 1e-12), opts);
  MatrixXd residuals(25, 1);
  for (int i = 0; i < 25; ++i)
    residuals(i, 0) = std::sin(5.0 * design.points(i, 0));
  BiasDraw d = prior.conditional_draw(residuals, rng);
  CHECK((d.design_values - residuals).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("basis prior collapses as tau2 goes to zero") {
  Rng rng = make_rng(4);
  Design design = uniform_design(30, Box::interval(0.0, 1.0), rng);
  auto rule = gauss_legendre_rule(12, Box::interval(0.0, 1.0));
  BasisExpansionPrior prior(design, rule, 10, 1e-14,
                            VectorXd::Constant(1, 0.04));
  MatrixXd residuals(30, 1);
  for (int i = 0; i < 30; ++i) residuals(i, 0) = std_normal(rng);
  BiasDraw d = prior.conditional_draw(residuals, rng);
  CHECK(d.design_values.cwiseAbs().maxCoeff() <= 1e-4);
  CHECK(d.grid_values.values.cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("basis posterior mean recovers a cubic signal") {
  Rng rng = make_rng(5);
  Design design = uniform_design(60, Box::interval(0.0, 1.0), rng);
  auto rule = gauss_legendre_rule(12, Box::interval(0.0, 1.0));
  BasisExpansionPrior prior(design, rule, 12, 100.0,
                            VectorXd::Constant(1, 1e-8));
  VectorXd target(60);
  for (int i = 0; i < 60; ++i) {
    double x = design.points(i, 0);
    target[i] = 0.3 - 1.2 * x + 0.7 * x * x + 2.0 * x * x * x;
  }
  auto [mean, cov] = prior.coefficient_posterior(target, 0);
  VectorXd fit = prior.basis_at(design.points) * mean;
  double rmse = std::sqrt((fit - target).squaredNorm() / 60.0);
  CHECK(rmse <= 0.01);
}

TEST_CASE("basis coefficient posterior matches the normal equations") {
  Rng rng = make_rng(6);
  Design design = uniform_design(40, Box::interval(0.0, 1.0), rng);
  auto rule = gauss_legendre_rule(10, Box::interval(0.0, 1.0));
  const double tau2 = 2.5, noise = 0.09;
  BasisExpansionPrior prior(design, rule, 8, tau2,
                            VectorXd::Constant(1, noise));
  VectorXd r(40);
  for (int i = 0; i < 40; ++i) r[i] = std_normal(rng);

  MatrixXd X = prior.basis_at(design.points);
  MatrixXd precision =
      X.transpose() * X / noise + MatrixXd::Identity(8, 8) / tau2;
  VectorXd oracle = precision.inverse() * (X.transpose() * r / noise);

  auto [mean, cov] = prior.coefficient_posterior(r, 0);
  CHECK((mean - oracle).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("nullspace-restricted basis draws satisfy the functionals exactly") {
  Rng rng = make_rng(7);
  Design design = uniform_design(30, Box::interval(0.0, 1.0), rng);
  auto rule = gauss_legendre_rule(16, Box::interval(0.0, 1.0));
  BasisExpansionPrior prior(design, rule, 10, 1.0, VectorXd::Constant(1, 0.04));

  // functional: quadrature of x * b(x) expressed on the coefficients
  MatrixXd grid_basis = prior.basis_at(rule->nodes);
  Eigen::RowVectorXd functional =
      (rule->weights.array() * rule->nodes.col(0).array()).matrix().transpose() *
      grid_basis;
  auto restricted = prior.restricted_to_nullspace(functional);

  MatrixXd residuals(30, 1);
  for (int i = 0; i < 30; ++i) residuals(i, 0) = std_normal(rng);
  for (int trial = 0; trial < 5; ++trial) {
    BiasDraw d = restricted->conditional_draw(residuals, rng);
    double value = (rule->weights.array() * rule->nodes.col(0).array() *
                    d.grid_values.values.col(0).array())
                       .sum();
    CHECK(std::abs(value) <= 1e-10 * std::max(1.0, norm(d.grid_values)));
  }
}

TEST_CASE("ogp kernel with zero gradients reduces to the base kernel") {
  ComputerModel constant;
  constant.outputs = 1;
  constant.theta_domain = Box::interval(0.0, 1.0);
  constant.gradient_mode = GradientMode::analytic;
  constant.eval_fn = [](const VectorXd&, const VectorXd&) {
    return VectorXd::Ones(1);
  };
  constant.analytic_gradient = [](int, const VectorXd&, const VectorXd&) {
    return VectorXd::Zero(1);
  };
  auto rule = gauss_legendre_rule(16, Box::interval(0.0, 1.0));
  WarningList warnings;
  ConstraintSet cs = build_constraint_set(constant, VectorXd::Constant(1, 0.5),
                                          rule, &warnings);
  MaternKernel base(1.3, 0.5);
  CovarianceFn modified = ogp_kernel(base, cs, rule, 0, &warnings);
  Rng rng = make_rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    VectorXd x = VectorXd::Constant(1, uniform01(rng));
    VectorXd y = VectorXd::Constant(1, uniform01(rng));
    CHECK(modified(x, y) == doctest::Approx(base(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("ogp functional covariance agrees with nested 1-d quadrature") {
  // H = int int u u' C(u, u') du du' for the linear-gradient case
  MaternKernel base(1.0, 0.5);
  auto rule = gauss_legendre_rule(32, Box::interval(0.0, 1.0));

  double tensor = 0.0;
  {
    auto rule2 = gauss_legendre_rule(
        32, Box((VectorXd(2) << 0.0, 0.0).finished(),
                (VectorXd(2) << 1.0, 1.0).finished()));
    for (int i = 0; i < rule2->size(); ++i) {
      VectorXd u = rule2->nodes.row(i).head(1);
      VectorXd v = rule2->nodes.row(i).tail(1);
      tensor += rule2->weights[i] * u[0] * v[0] * base(u, v);
    }
  }
  double nested = 0.0;
  for (int i = 0; i < rule->size(); ++i) {
    VectorXd u = rule->nodes.row(i).transpose();
    double inner = 0.0;
    for (int j = 0; j < rule->size(); ++j) {
      VectorXd v = rule->nodes.row(j).transpose();
      inner += rule->weights[j] * v[0] * base(u, v);
    }
    nested += rule->weights[i] * u[0] * inner;
  }
  CHECK(std::abs(tensor - nested) < 1e-10);

  // and the library kernel reproduces C - h H^{-1} h built from that oracle
  auto p = model1();
  ConstraintSet cs =
      build_constraint_set(p.model, VectorXd::Constant(1, 3.0), rule);
  CovarianceFn modified = ogp_kernel(base, cs, rule, 0);
  auto h_of = [&](const VectorXd& x) {
    double acc = 0.0;
    for (int i = 0; i < rule->size(); ++i) {
      VectorXd u = rule->nodes.row(i).transpose();
      acc += rule->weights[i] * u[0] * base(x, u);
    }
    return acc;
  };
  Rng rng = make_rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    VectorXd x = VectorXd::Constant(1, uniform01(rng));
    VectorXd y = VectorXd::Constant(1, uniform01(rng));
    double expected = base(x, y) - h_of(x) * h_of(y) / nested;
    CHECK(modified(x, y) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("ogp sample paths satisfy the discretized constraint") {
  auto p = model1();
  auto rule = gauss_legendre_rule(200, p.x_domain);
  ConstraintSet cs =
      build_constraint_set(p.model, VectorXd::Constant(1, 3.5), rule);
  CovarianceFn modified = ogp_kernel(MaternKernel(1.0, 0.5), cs, rule, 0);

  const int N = rule->size();
  MatrixXd K(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = i; j < N; ++j) {
      double v = modified(rule->nodes.row(i).transpose(),
                          rule->nodes.row(j).transpose());
      K(i, j) = v;
      K(j, i) = v;
    }

  // PSD after jitter
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(K);
  CHECK(es.eigenvalues().minCoeff() >= -1e-8 * K.trace());

  Rng rng = make_rng(10);
  VectorXd zero = VectorXd::Zero(N);
  for (int path = 0; path < 100; ++path) {
    VectorXd b = cholesky_sample(zero, K, rng, {1e-10, 3});
    double functional =
        (rule->weights.array() * rule->nodes.col(0).array() * b.array()).sum();
    double norm_b =
        std::sqrt((rule->weights.array() * b.array().square()).sum());
    CHECK(std::abs(functional) <= 1e-3 * norm_b);
  }
}

TEST_CASE("one-shot draw wrappers run end to end") {
  Rng rng = make_rng(11);
  Design design = uniform_design(15, Box::interval(0.0, 1.0), rng);
  auto rule = gauss_legendre_rule(8, Box::interval(0.0, 1.0));
  MatrixXd residuals(15, 1);
  for (int i = 0; i < 15; ++i) residuals(i, 0) = std_normal(rng);
  BiasDraw g = gp_conditional_draw(MaternKernel(1.0, 0.5), design, residuals,
                                   NoiseModel::iid(0.04, 1), rule, rng);
  CHECK(g.provenance == BiasDraw::Provenance::raw);
  CHECK(g.design_values.rows() == 15);
  CHECK(g.grid_values.values.rows() == rule->size());

  BasisExpansionPrior bp(design, rule, 8, 1.0, VectorXd::Constant(1, 0.04));
  BiasDraw b = basis_conditional_draw(bp, residuals, rng);
  CHECK(b.design_values.allFinite());
}
