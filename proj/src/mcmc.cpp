#include "orthocal/mcmc.hpp"

#include <cmath>

#include "orthocal/numerics.hpp"

namespace orthocal {

AdaptiveProposal::AdaptiveProposal(const MatrixXd& initial_cov, int warmup)
    : dim_(static_cast<int>(initial_cov.rows())),
      warmup_(warmup),
      mean_(VectorXd::Zero(initial_cov.rows())),
      second_(MatrixXd::Zero(initial_cov.rows(), initial_cov.cols())),
      initial_cov_(initial_cov),
      cov_(initial_cov) {
  if (initial_cov.cols() != dim_)
    throw DimensionError("AdaptiveProposal: covariance not square");
  chol_ = jittered_cholesky(cov_, {1e-12, 3});
}

void AdaptiveProposal::observe(const VectorXd& theta) {
  if (frozen_) return;
  if (theta.size() != dim_)
    throw DimensionError("AdaptiveProposal: dimension mismatch");
  ++count_;
  mean_ += (theta - mean_) / static_cast<double>(count_);
  second_ += theta * theta.transpose();
  if (count_ >= warmup_) rebuild();
}

void AdaptiveProposal::rebuild() {
  double n = static_cast<double>(count_);
  MatrixXd emp = second_ / n - mean_ * mean_.transpose();
  emp = 0.5 * (emp + emp.transpose());
  double scale = 2.38 * 2.38 / dim_;
  cov_ = scale * emp + 1e-6 * MatrixXd::Identity(dim_, dim_);
  chol_ = jittered_cholesky(cov_, {1e-12, 3});
}

VectorXd AdaptiveProposal::propose(const VectorXd& current, Rng& rng) const {
  VectorXd z(dim_);
  for (int i = 0; i < dim_; ++i) z[i] = std_normal(rng);
  return current + chol_ * z;
}

bool mh_step(const LogDensity& log_target, VectorXd& state, double& log_value,
             const AdaptiveProposal& proposal, Rng& rng) {
  VectorXd cand = proposal.propose(state, rng);
  double cand_log = log_target(cand);
  if (std::isnan(cand_log))
    throw NumericalError("mh_step: log target returned NaN");
  double log_ratio = cand_log - log_value;
  if (log_ratio >= 0.0 || std::log(uniform01(rng)) < log_ratio) {
    state = cand;
    log_value = cand_log;
    return true;
  }
  return false;
}

double effective_sample_size(const VectorXd& chain) {
  const long n = chain.size();
  if (n < 4) return static_cast<double>(n);
  double mean = chain.mean();
  VectorXd centered = chain.array() - mean;
  double c0 = centered.squaredNorm() / n;
  if (c0 <= 0.0) return static_cast<double>(n);

  auto gamma = [&](long lag) {
    double s = 0.0;
    for (long i = 0; i + lag < n; ++i) s += centered[i] * centered[i + lag];
    return s / n;
  };

  // Sum Geyer pairs Gamma_m = gamma(2m) + gamma(2m+1) while positive and
  // monotone non-increasing.
  double sum_pairs = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (long m = 0; 2 * m + 1 < n; ++m) {
    double pair = gamma(2 * m) + gamma(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    prev = pair;
    sum_pairs += pair;
  }
  double tau = std::max(2.0 * sum_pairs / c0 - 1.0, 1.0);
  return std::max(1.0, n / tau);
}

}  // namespace orthocal
