#include "orthocal/models.hpp"

#include <cmath>

namespace orthocal {

namespace {

constexpr double kPi = 3.14159265358979323846;

double model1_truth(double x) { return 4.0 * x + x * std::sin(5.0 * x); }

// Population minimizer of integral (y_R - t x)^2 over [0,1]:
//   t* = int x y_R dx / int x^2 dx, both integrals in closed form.
double model1_theta_star() {
  // int_0^1 x^2 sin(5x) dx via the standard antiderivative
  double a = 5.0;
  auto anti = [&](double x) {
    return (2.0 * x / (a * a)) * std::sin(a * x) +
           (2.0 / (a * a * a) - x * x / a) * std::cos(a * x);
  };
  double x2sin = anti(1.0) - anti(0.0);
  return 3.0 * (4.0 / 3.0 + x2sin);
}

double model2_eval(double x, double t1, double t2) {
  double s = std::sin(2.0 * kPi * t1 - kPi);
  double u = 2.0 * kPi * t2 - kPi;
  return 7.0 * s * s + 2.0 * u * u * std::sin(2.0 * kPi * x - kPi);
}

double logistic6(double x) { return 1.0 / (1.0 + std::exp(-6.0 * (x - 0.5))); }

}  // namespace

double standard_normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double standard_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
}

ReferenceProblem model1() {
  ReferenceProblem p;
  p.name = "model1";
  p.x_domain = Box::interval(0.0, 1.0);
  p.theta_star = VectorXd::Constant(1, model1_theta_star());
  p.default_noise = MatrixXd::Constant(1, 1, 0.2 * 0.2);
  p.truth = [](const VectorXd& x) {
    return VectorXd::Constant(1, model1_truth(x[0]));
  };
  p.model.outputs = 1;
  p.model.theta_domain = Box::interval(0.0, 10.0);
  p.model.gradient_mode = GradientMode::analytic;
  p.model.eval_fn = [](const VectorXd& x, const VectorXd& t) {
    return VectorXd::Constant(1, t[0] * x[0]);
  };
  p.model.analytic_gradient = [](int, const VectorXd& x, const VectorXd&) {
    return VectorXd::Constant(1, x[0]);
  };
  return p;
}

ReferenceProblem model2() {
  ReferenceProblem p;
  p.name = "model2";
  p.x_domain = Box::interval(0.0, 1.0);
  p.theta_star = (VectorXd(2) << 0.2, 0.3).finished();
  p.default_noise = MatrixXd::Constant(1, 1, 0.2 * 0.2);
  p.truth = [](const VectorXd& x) {
    return VectorXd::Constant(1, model2_eval(x[0], 0.2, 0.3));
  };
  p.model.outputs = 1;
  p.model.theta_domain =
      Box((VectorXd(2) << 0.0, 0.0).finished(), (VectorXd(2) << 0.25, 0.5).finished());
  p.model.gradient_mode = GradientMode::analytic;
  p.model.eval_fn = [](const VectorXd& x, const VectorXd& t) {
    return VectorXd::Constant(1, model2_eval(x[0], t[0], t[1]));
  };
  p.model.analytic_gradient = [](int j, const VectorXd& x, const VectorXd& t) {
    if (j == 1) {
      // d/dt1 7 sin^2(2 pi t1 - pi) = 14 pi sin(4 pi t1 - 2 pi)
      return VectorXd::Constant(
          1, 14.0 * kPi * std::sin(4.0 * kPi * t[0] - 2.0 * kPi));
    }
    double u = 2.0 * kPi * t[1] - kPi;
    return VectorXd::Constant(
        1, 8.0 * kPi * u * std::sin(2.0 * kPi * x[0] - kPi));
  };
  return p;
}

ReferenceProblem bivariate_pair() {
  ReferenceProblem p;
  p.name = "bivariate";
  p.x_domain = Box::interval(0.0, 1.0);
  p.default_noise =
      (MatrixXd(2, 2) << 0.04, 0.012, 0.012, 0.04).finished();
  p.truth = [](const VectorXd& x) {
    VectorXd y(2);
    y[0] = model1_truth(x[0]);
    y[1] = logistic6(x[0]);
    return y;
  };
  p.model.outputs = 2;
  p.model.theta_domain = Box::interval(0.0, 10.0);
  p.model.gradient_mode = GradientMode::analytic;
  p.model.eval_fn = [](const VectorXd& x, const VectorXd& t) {
    VectorXd y(2);
    y[0] = t[0] * x[0];
    y[1] = standard_normal_cdf(t[0] * (x[0] - 0.5));
    return y;
  };
  p.model.analytic_gradient = [](int, const VectorXd& x, const VectorXd& t) {
    VectorXd g(2);
    g[0] = x[0];
    double u = x[0] - 0.5;
    g[1] = standard_normal_pdf(t[0] * u) * u;
    return g;
  };

  // Joint minimizer of sum_k int (y_k - f_k(., t))^2: golden-section search
  // on the smooth 1-d population loss.
  auto rule = gauss_legendre_rule(64, p.x_domain);
  auto loss = [&](double t) {
    VectorXd tv = VectorXd::Constant(1, t);
    double total = 0.0;
    for (int i = 0; i < rule->size(); ++i) {
      VectorXd x = rule->nodes.row(i).transpose();
      VectorXd r = p.truth(x) - p.model.eval_fn(x, tv);
      total += rule->weights[i] * r.squaredNorm();
    }
    return total;
  };
  double a = 0.0, b = 10.0;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = loss(c), fd = loss(d);
  while (b - a > 1e-10) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - gr * (b - a); fc = loss(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + gr * (b - a); fd = loss(d);
    }
  }
  p.theta_star = VectorXd::Constant(1, 0.5 * (a + b));
  return p;
}

}  // namespace orthocal
