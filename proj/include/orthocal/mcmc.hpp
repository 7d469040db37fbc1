#pragma once

#include <functional>

#include "orthocal/common.hpp"

namespace orthocal {

using LogDensity = std::function<double(const VectorXd&)>;

// Random-walk proposal with Haario-style adaptation: the proposal covariance
// is (2.38^2 / p) * Cov(theta_1..theta_t) + 1e-6 I, rebuilt from running
// moments while adapting and frozen afterwards.
class AdaptiveProposal {
 public:
  explicit AdaptiveProposal(const MatrixXd& initial_cov, int warmup = 50);

  void observe(const VectorXd& theta);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  VectorXd propose(const VectorXd& current, Rng& rng) const;
  const MatrixXd& covariance() const { return cov_; }

 private:
  void rebuild();

  int dim_;
  int warmup_;          // draws observed before the empirical cov is trusted
  bool frozen_ = false;
  long count_ = 0;
  VectorXd mean_;
  MatrixXd second_;     // running sum of outer products
  MatrixXd initial_cov_;
  MatrixXd cov_;
  MatrixXd chol_;       // lower factor of cov_
};

// One Metropolis step with a symmetric proposal. Returns true on acceptance;
// state and log_target are updated in place. Non-finite proposals are
// rejected (log_target -inf encodes support truncation).
bool mh_step(const LogDensity& log_target, VectorXd& state, double& log_value,
             const AdaptiveProposal& proposal, Rng& rng);

// Effective sample size by Geyer's initial monotone sequence estimator.
double effective_sample_size(const VectorXd& chain);

}  // namespace orthocal
