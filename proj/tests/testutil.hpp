#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "orthocal/common.hpp"

namespace testutil {

using orthocal::MatrixXd;
using orthocal::Rng;
using orthocal::VectorXd;

// Kolmogorov-Smirnov statistic of draws against an analytic CDF.
inline double ks_statistic(std::vector<double> draws,
                           const std::function<double(double)>& cdf) {
  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double worst = 0.0;
  for (size_t i = 0; i < draws.size(); ++i) {
    double f = cdf(draws[i]);
    worst = std::max(worst, std::abs(f - (i + 1) / n));
    worst = std::max(worst, std::abs(f - i / n));
  }
  return worst;
}

inline double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Random SPD matrix with a given condition number.
inline MatrixXd random_spd(int n, double condition, Rng& rng) {
  MatrixXd raw(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) raw(i, j) = orthocal::std_normal(rng);
  Eigen::HouseholderQR<MatrixXd> qr(raw);
  MatrixXd q = qr.householderQ();
  VectorXd ev(n);
  for (int i = 0; i < n; ++i)
    ev[i] = std::pow(condition, -static_cast<double>(i) / std::max(1, n - 1));
  return q * ev.asDiagonal() * q.transpose();
}

inline VectorXd random_vector(int n, Rng& rng) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = orthocal::std_normal(rng);
  return v;
}

}  // namespace testutil
