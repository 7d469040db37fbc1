#include <doctest.h>

#include <cmath>

#include "orthocal/optim.hpp"
#include "testutil.hpp"

using namespace orthocal;

TEST_CASE("nelder_mead finds the minimum of a quadratic bowl") {
  auto f = [](const VectorXd& x) {
    return (x[0] - 0.3) * (x[0] - 0.3) + 2.0 * (x[1] + 0.1) * (x[1] + 0.1);
  };
  Box bounds((VectorXd(2) << -1.0, -1.0).finished(),
             (VectorXd(2) << 1.0, 1.0).finished());
  NelderMeadOptions opts;
  opts.simplex_tol = 1e-8;
  auto res = nelder_mead(f, VectorXd::Zero(2), bounds, opts);
  CHECK(res.converged);
  CHECK(std::abs(res.x[0] - 0.3) < 1e-6);
  CHECK(std::abs(res.x[1] + 0.1) < 1e-6);
}

TEST_CASE("nelder_mead respects box bounds when the minimum is outside") {
  auto f = [](const VectorXd& x) { return (x[0] - 5.0) * (x[0] - 5.0); };
  auto res = nelder_mead(f, VectorXd::Constant(1, 0.5),
                         Box::interval(0.0, 1.0));
  CHECK(res.x[0] <= 1.0 + 1e-12);
  CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("latin_hypercube strata cover every axis") {
  Rng rng = make_rng(3);
  Box bounds((VectorXd(2) << 0.0, 10.0).finished(),
             (VectorXd(2) << 1.0, 20.0).finished());
  MatrixXd pts = latin_hypercube(8, bounds, rng);
  REQUIRE(pts.rows() == 8);
  for (int a = 0; a < 2; ++a) {
    std::vector<bool> hit(8, false);
    for (int i = 0; i < 8; ++i) {
      double u = (pts(i, a) - bounds.lo[a]) / bounds.width(a);
      CHECK(u >= 0.0);
      CHECK(u <= 1.0);
      hit[static_cast<int>(std::min(7.0, u * 8))] = true;
    }
    for (bool h : hit) CHECK(h);
  }
}

TEST_CASE("multistart escapes local minima of a multimodal objective") {
  // two wells, the deeper one near x = 0.8
  auto f = [](const VectorXd& x) {
    double a = (x[0] - 0.2) * (x[0] - 0.2);
    double b = (x[0] - 0.8) * (x[0] - 0.8) - 0.05;
    return std::min(a, b);
  };
  Rng rng = make_rng(10);
  MultistartOptions opts;
  opts.starts = 10;
  auto res = multistart_minimize(f, Box::interval(0.0, 1.0), rng, opts);
  CHECK(std::abs(res.x[0] - 0.8) < 1e-3);
}

TEST_CASE("multistart reports failure when nothing converges") {
  auto f = [](const VectorXd& x) { return x[0]; };
  Rng rng = make_rng(1);
  MultistartOptions opts;
  opts.starts = 3;
  opts.local.max_iters = 1;  // cannot reach the simplex tolerance
  opts.local.simplex_tol = 1e-15;
  CHECK_THROWS_AS(multistart_minimize(f, Box::interval(0.0, 1.0), rng, opts),
                  OptimizationError);
}
