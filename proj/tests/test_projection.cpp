#include <doctest.h>

#include <cmath>

#include "orthocal/models.hpp"
#include "orthocal/projection.hpp"
#include "testutil.hpp"

using namespace orthocal;

namespace {

// constraint data assembled by hand from explicit gradient functions
ConstraintSet manual_constraints(
    const std::vector<std::function<VectorXd(const VectorXd&)>>& gradients,
    const QuadratureRulePtr& rule, const Design& design) {
  ConstraintSet cs;
  cs.anchor = VectorXd::Zero(1);
  const int p = static_cast<int>(gradients.size());
  for (const auto& g : gradients) {
    cs.gradients.push_back(tabulate(g, rule));
    MatrixXd at_design(design.size(), cs.gradients.back().outcomes());
    for (int i = 0; i < design.size(); ++i)
      at_design.row(i) = g(design.points.row(i).transpose()).transpose();
    cs.design_gradients.push_back(at_design);
  }
  cs.gram.resize(p, p);
  for (int j = 0; j < p; ++j)
    for (int l = 0; l < p; ++l)
      cs.gram(j, l) = inner_product(cs.gradients[j], cs.gradients[l]);
  return cs;
}

BiasDraw make_draw(const std::function<VectorXd(const VectorXd&)>& f,
                   const QuadratureRulePtr& rule, const Design& design) {
  BiasDraw d;
  d.grid_values = tabulate(f, rule);
  d.design_values.resize(design.size(), d.grid_values.outcomes());
  for (int i = 0; i < design.size(); ++i)
    d.design_values.row(i) = f(design.points.row(i).transpose()).transpose();
  return d;
}

}  // namespace

TEST_CASE("functional projection of b = 1 against g(x) = x") {
  auto rule = gauss_legendre_rule(32, Box::interval(0.0, 1.0));
  Rng rng = make_rng(1);
  Design design = uniform_design(10, Box::interval(0.0, 1.0), rng);
  auto cs = manual_constraints(
      {[](const VectorXd& x) { return VectorXd::Constant(1, x[0]); }}, rule,
      design);
  BiasDraw b = make_draw([](const VectorXd&) { return VectorXd::Ones(1); },
                         rule, design);

  auto [proj, report] = functional_project(b, cs);
  CHECK(report.lambda[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(proj.provenance == BiasDraw::Provenance::projected);
  for (int i = 0; i < rule->size(); ++i) {
    double x = rule->nodes(i, 0);
    CHECK(proj.grid_values.values(i, 0) ==
          doctest::Approx(1.0 - 1.5 * x).epsilon(1e-12));
  }
  for (int i = 0; i < design.size(); ++i) {
    double x = design.points(i, 0);
    CHECK(proj.design_values(i, 0) ==
          doctest::Approx(1.0 - 1.5 * x).epsilon(1e-12));
  }
  CHECK(std::abs(inner_product(proj.grid_values, cs.gradients[0])) < 1e-12);
}

TEST_CASE("only the constrained outcome component is corrected") {
  auto rule = gauss_legendre_rule(16, Box::interval(0.0, 1.0));
  Rng rng = make_rng(2);
  Design design = uniform_design(5, Box::interval(0.0, 1.0), rng);
  auto cs = manual_constraints(
      {[](const VectorXd&) { return (VectorXd(2) << 1.0, 0.0).finished(); }},
      rule, design);
  const double c1 = 0.8, c2 = -1.7;
  BiasDraw b = make_draw(
      [&](const VectorXd&) { return (VectorXd(2) << c1, c2).finished(); }, rule,
      design);
  auto [proj, report] = functional_project(b, cs);
  CHECK(proj.grid_values.values.col(0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((proj.grid_values.values.col(1).array() - c2).abs().maxCoeff() < 1e-12);
}

TEST_CASE("projection of a feasible draw is the identity") {
  auto p = model1();
  auto rule = gauss_legendre_rule(32, p.x_domain);
  Rng rng = make_rng(3);
  Design design = uniform_design(8, p.x_domain, rng);
  ConstraintSet cs =
      build_constraint_set(p.model, VectorXd::Constant(1, 3.0), rule, design);
  BiasDraw b = make_draw(
      [&](const VectorXd& x) {
        return VectorXd::Constant(1, std::cos(3.0 * x[0]));
      },
      rule, design);
  auto [feasible, r1] = functional_project(b, cs);
  auto [again, r2] = functional_project(feasible, cs);
  CHECK(std::abs(r2.lambda[0]) <= 1e-10);
  CHECK((again.grid_values.values - feasible.grid_values.values)
            .cwiseAbs()
            .maxCoeff() <= 1e-12);
}

TEST_CASE("projection is linear and optimal in the induced norm") {
  auto p = model2();
  auto rule = gauss_legendre_rule(32, p.x_domain);
  Rng rng = make_rng(4);
  Design design = uniform_design(6, p.x_domain, rng);
  VectorXd anchor(2);
  anchor << 0.2, 0.3;
  ConstraintSet cs = build_constraint_set(p.model, anchor, rule, design);

  auto random_draw = [&]() {
    MatrixXd grid(rule->size(), 1);
    for (int i = 0; i < grid.rows(); ++i) grid(i, 0) = std_normal(rng);
    BiasDraw d;
    d.grid_values = GridFunction(grid, rule);
    d.design_values.resize(design.size(), 1);
    for (int i = 0; i < design.size(); ++i)
      d.design_values(i, 0) = std_normal(rng);
    return d;
  };

  SUBCASE("linearity") {
    for (int trial = 0; trial < 5; ++trial) {
      BiasDraw b1 = random_draw(), b2 = random_draw();
      double a = std_normal(rng), c = std_normal(rng);
      BiasDraw combo = b1;
      combo.grid_values.values = a * b1.grid_values.values + c * b2.grid_values.values;
      combo.design_values = a * b1.design_values + c * b2.design_values;
      auto [pc, rc] = functional_project(combo, cs);
      auto [p1, ra] = functional_project(b1, cs);
      auto [p2, rb] = functional_project(b2, cs);
      MatrixXd expected = a * p1.grid_values.values + c * p2.grid_values.values;
      CHECK((pc.grid_values.values - expected).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }

  SUBCASE("removed component lies in the gradient span") {
    BiasDraw b = random_draw();
    auto [proj, report] = functional_project(b, cs);
    MatrixXd removed = b.grid_values.values - proj.grid_values.values;
    MatrixXd reconstructed = MatrixXd::Zero(rule->size(), 1);
    for (int j = 0; j < cs.constraints(); ++j)
      reconstructed += report.lambda[j] * cs.gradients[j].values;
    CHECK((removed - reconstructed).cwiseAbs().maxCoeff() <= 1e-10);
  }

  SUBCASE("no feasible point is closer") {
    BiasDraw b = random_draw();
    auto [proj, report] = functional_project(b, cs);
    GridFunction diff_best = b.grid_values;
    diff_best -= proj.grid_values;
    double best = norm(diff_best);
    for (int trial = 0; trial < 100; ++trial) {
      BiasDraw h = random_draw();
      auto [hf, hr] = functional_project(h, cs);  // random feasible point
      GridFunction candidate = proj.grid_values;
      GridFunction step = hf.grid_values;
      step *= 0.3 * std_normal(rng);
      candidate += step;  // stays feasible: the set is a linear subspace
      GridFunction diff = b.grid_values;
      diff -= candidate;
      CHECK(best <= norm(diff) + 1e-12);
    }
  }
}

TEST_CASE("rank-deficient constraints project through the pseudo-inverse") {
  auto rule = gauss_legendre_rule(16, Box::interval(0.0, 1.0));
  Rng rng = make_rng(5);
  Design design = uniform_design(5, Box::interval(0.0, 1.0), rng);
  // duplicated gradient: Gram is singular
  auto g = [](const VectorXd& x) { return VectorXd::Constant(1, x[0]); };
  auto cs = manual_constraints({g, g}, rule, design);
  BiasDraw b = make_draw([](const VectorXd&) { return VectorXd::Ones(1); },
                         rule, design);
  WarningList warnings;
  auto [proj, report] = functional_project(b, cs, &warnings);
  CHECK(report.pseudo_inverse);
  CHECK(!warnings.empty());
  CHECK(std::abs(inner_product(proj.grid_values, cs.gradients[0])) <= 1e-10);
}

TEST_CASE("finite-dimensional conditioning on simple cases") {
  SUBCASE("first coordinate pinned to zero") {
    MatrixXd A(2, 1);
    A << 1.0, 0.0;
    auto res = finite_dim_project_gaussian(VectorXd::Zero(2),
                                           MatrixXd::Identity(2, 2), A);
    CHECK(res.mean.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(res.cov(0, 0) == doctest::Approx(0.0));
    CHECK(res.cov(1, 1) == doctest::Approx(1.0));
    CHECK(res.cov(0, 1) == doctest::Approx(0.0));
  }
  SUBCASE("diagonal constraint") {
    MatrixXd A(2, 1);
    A << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    VectorXd mu = VectorXd::Ones(2);
    auto res = finite_dim_project_gaussian(mu, MatrixXd::Identity(2, 2), A);
    CHECK(res.mean.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(res.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(res.cov(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(res.cov(0, 1) == doctest::Approx(-0.5).epsilon(1e-12));
  }
}

TEST_CASE("constrained covariance annihilates the constraints and stays PSD") {
  Rng rng = make_rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 4 + trial % 4;
    int p = 1 + trial % 2;
    MatrixXd cov = testutil::random_spd(n, 1e3, rng);
    MatrixXd A(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) A(i, j) = std_normal(rng);
    VectorXd mu = testutil::random_vector(n, rng);
    auto res = finite_dim_project_gaussian(mu, cov, A);
    CHECK((A.transpose() * res.cov * A).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((A.transpose() * res.mean).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(res.cov);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, res.cov.trace()));
  }
}

TEST_CASE("whitened projection fixes feasible points and is idempotent") {
  Rng rng = make_rng(7);
  const int n = 6, p = 2;
  MatrixXd cov = testutil::random_spd(n, 100.0, rng);
  MatrixXd A(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) A(i, j) = std_normal(rng);

  MatrixXd P = whitened_projector(cov, A);
  CHECK((P * P - P).cwiseAbs().maxCoeff() <= 1e-9);

  VectorXd x = testutil::random_vector(n, rng);
  VectorXd y = P * x;
  CHECK((A.transpose() * y).cwiseAbs().maxCoeff() <= 1e-10 * y.norm());
  VectorXd feasible = y;
  CHECK((whitened_project_sample(feasible, cov, A) - feasible)
            .cwiseAbs()
            .maxCoeff() <= 1e-9 * std::max(1.0, feasible.norm()));
}

TEST_CASE("identity covariance reduces to the orthogonal projection") {
  Rng rng = make_rng(8);
  const int n = 5;
  MatrixXd A(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) A(i, j) = std_normal(rng);
  MatrixXd ortho =
      MatrixXd::Identity(n, n) -
      A * (A.transpose() * A).inverse() * A.transpose();
  VectorXd x = testutil::random_vector(n, rng);
  CHECK((whitened_project_sample(x, MatrixXd::Identity(n, n), A) - ortho * x)
            .cwiseAbs()
            .maxCoeff() <= 1e-10);
}

TEST_CASE("pushforward moments match the conditional law") {
  Rng rng = make_rng(9);
  const int n = 4, p = 1, draws = 20000;
  MatrixXd cov = testutil::random_spd(n, 50.0, rng);
  VectorXd mu = testutil::random_vector(n, rng);
  MatrixXd A(n, p);
  for (int i = 0; i < n; ++i) A(i, 0) = std_normal(rng);

  auto law = finite_dim_project_gaussian(mu, cov, A);
  MatrixXd P = whitened_projector(cov, A);

  VectorXd mean_acc = VectorXd::Zero(n);
  MatrixXd second = MatrixXd::Zero(n, n);
  for (int i = 0; i < draws; ++i) {
    VectorXd x = cholesky_sample(mu, cov, rng, {1e-14, 3});
    VectorXd y = P * x;
    mean_acc += y;
    second += y * y.transpose();
  }
  mean_acc /= draws;
  MatrixXd sample_cov = second / draws - mean_acc * mean_acc.transpose();

  for (int i = 0; i < n; ++i) {
    double se = std::sqrt(law.cov(i, i) / draws);
    CHECK(std::abs(mean_acc[i] - law.mean[i]) <= 4.0 * se + 1e-10);
    for (int j = 0; j < n; ++j) {
      double var_ij = law.cov(i, i) * law.cov(j, j) + law.cov(i, j) * law.cov(i, j);
      double se_cov = std::sqrt(var_ij / draws);
      CHECK(std::abs(sample_cov(i, j) - law.cov(i, j)) <= 4.0 * se_cov + 1e-10);
    }
  }
}

TEST_CASE("moment projection is a no-op for a constraint-respecting prior") {
  auto p = model1();
  auto rule = gauss_legendre_rule(12, p.x_domain);
  Rng rng = make_rng(10);
  Design design = uniform_design(12, p.x_domain, rng);
  ConstraintSet cs =
      build_constraint_set(p.model, VectorXd::Constant(1, 3.5), rule, design);

  BasisExpansionPrior raw(design, rule, 10, 1.0, VectorXd::Constant(1, 0.04));
  // orthogonalize the coefficient space against the discretized constraint
  MatrixXd grid_basis = raw.basis_at(rule->nodes);
  Eigen::RowVectorXd functional =
      (rule->weights.array() * cs.gradients[0].values.col(0).array())
          .matrix()
          .transpose() *
      grid_basis;
  auto prior = raw.restricted_to_nullspace(functional);

  MatrixXd residuals(design.size(), 1);
  for (int i = 0; i < design.size(); ++i) residuals(i, 0) = std_normal(rng);

  const int dim = (design.size() + rule->size());
  const int M = 10 * dim;
  const std::uint64_t seed = 424242;

  Rng call_rng = make_rng(seed);
  BiasDraw projected =
      moment_project_nongaussian(*prior, residuals, cs, M, call_rng);

  // replay the stream: the fresh draw is the (M+1)-th conditional draw
  Rng replay = make_rng(seed);
  BiasDraw fresh;
  for (int m = 0; m <= M; ++m) fresh = prior->conditional_draw(residuals, replay);

  double scale = std::max(1.0, fresh.grid_values.values.cwiseAbs().maxCoeff());
  CHECK((projected.grid_values.values - fresh.grid_values.values)
            .cwiseAbs()
            .maxCoeff() <= 1e-6 * scale);
  CHECK((projected.design_values - fresh.design_values).cwiseAbs().maxCoeff() <=
        1e-6 * scale);
}

TEST_CASE("moment projection enforces the discrete constraint") {
  auto p = model1();
  auto rule = gauss_legendre_rule(16, p.x_domain);
  Rng rng = make_rng(11);
  Design design = uniform_design(30, p.x_domain, rng);
  ConstraintSet cs =
      build_constraint_set(p.model, VectorXd::Constant(1, 3.5), rule, design);
  BasisExpansionPrior prior(design, rule, 10, 1.0, VectorXd::Constant(1, 0.04));

  MatrixXd residuals(30, 1);
  for (int i = 0; i < 30; ++i)
    residuals(i, 0) = 0.4 * design.points(i, 0) + 0.1 * std_normal(rng);

  MatrixXd G = stacked_constraint_matrix(cs, 30, MomentConstraintMode::quadrature);
  for (int trial = 0; trial < 3; ++trial) {
    BiasDraw projected =
        moment_project_nongaussian(prior, residuals, cs, 2000, rng);
    CHECK(projected.provenance == BiasDraw::Provenance::projected);
    CHECK(stacked_constraint_residual(stack_bias(projected), G) <= 1e-8);
  }

  // design-point constraint variant
  MatrixXd Gd = stacked_constraint_matrix(cs, 30, MomentConstraintMode::design);
  MomentProjectionOptions opts;
  opts.mode = MomentConstraintMode::design;
  BiasDraw projected =
      moment_project_nongaussian(prior, residuals, cs, 2000, rng, opts);
  CHECK(stacked_constraint_residual(stack_bias(projected), Gd) <= 1e-8);
}

TEST_CASE("moment projection rejects undersized sample counts") {
  auto p = model1();
  auto rule = gauss_legendre_rule(8, p.x_domain);
  Rng rng = make_rng(12);
  Design design = uniform_design(10, p.x_domain, rng);
  ConstraintSet cs =
      build_constraint_set(p.model, VectorXd::Constant(1, 3.5), rule, design);
  BasisExpansionPrior prior(design, rule, 8, 1.0, VectorXd::Constant(1, 0.04));
  MatrixXd residuals = MatrixXd::Zero(10, 1);
  CHECK_THROWS_AS(moment_project_nongaussian(prior, residuals, cs, 50, rng),
                  ContractError);
}
