#pragma once

#include <functional>

#include "orthocal/common.hpp"

namespace orthocal {

using Objective = std::function<double(const VectorXd&)>;

struct NelderMeadOptions {
  int max_iters = 2000;
  double simplex_tol = 1e-6;   // terminate when simplex diameter <= tol
  double initial_step = 0.1;   // times per-axis box width
};

struct NelderMeadResult {
  VectorXd x;
  double value = 0.0;
  int iters = 0;
  bool converged = false;
};

// Downhill simplex within a box. Points outside the box are evaluated at
// their clamped position plus a quadratic distance penalty, so interior
// minima are untouched.
NelderMeadResult nelder_mead(const Objective& f, const VectorXd& start,
                             const Box& bounds,
                             const NelderMeadOptions& opts = {});

// n starting points, one per axis-stratum (maximin not attempted).
MatrixXd latin_hypercube(int n, const Box& bounds, Rng& rng);

struct MultistartOptions {
  int starts = 10;
  NelderMeadOptions local;
};

// Best local minimum over Latin-hypercube starts; throws OptimizationError
// when no start converges.
NelderMeadResult multistart_minimize(const Objective& f, const Box& bounds,
                                     Rng& rng,
                                     const MultistartOptions& opts = {});

}  // namespace orthocal
