#pragma once

#include "orthocal/model.hpp"

namespace orthocal {

// Bundled reference problems used by the benchmark studies. Each carries the
// simulator, the real process, the input/parameter domains, and the
// population-loss minimizer theta_star.
struct ReferenceProblem {
  std::string name;
  ComputerModel model;
  std::function<VectorXd(const VectorXd&)> truth;
  Box x_domain;
  VectorXd theta_star;
  MatrixXd default_noise;  // q x q
};

// y_R(x) = 4x + x sin 5x, f(x, t) = t x on X = [0,1], Theta = [0,10].
ReferenceProblem model1();

// f(x, t) = 7 sin^2(2 pi t1 - pi) + 2 (2 pi t2 - pi)^2 sin(2 pi x - pi),
// exact system y_R = f(., theta*) with theta* = (0.2, 0.3).
// Theta = [0, 0.25] x [0, 0.5] so that theta* is the unique minimizer
// (f is invariant under the sine/parabola symmetries on larger boxes).
ReferenceProblem model2();

// Two-outcome pair: y_R = (4x + x sin 5x, logistic(6(x - 1/2))),
// f(x, t) = (t x, Phi(t (x - 1/2))). Joint loss minimized near 3.56.
ReferenceProblem bivariate_pair();

double standard_normal_cdf(double z);
double standard_normal_pdf(double z);

}  // namespace orthocal
