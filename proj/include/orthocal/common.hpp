#pragma once

#include <Eigen/Dense>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace orthocal {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Caller-owned RNG stream. Substreams for parallel work are derived with
// substream(), never shared across workers.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Deterministic child stream: splitmix64 of (seed, index).
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Distribution objects are constructed per call: normal_distribution caches
// a spare deviate, which would leak state between caller-owned streams.
inline double std_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

// ---------------------------------------------------------------------------
// Errors

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ModelEvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OptimizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ExperimentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Warnings

enum class Severity { info = 0, warning = 1, severe = 2 };

struct Warning {
  Severity severity = Severity::warning;
  std::string message;
};

// Collected, not thrown: rank deficiency, extrapolation, acceptance rate, ...
using WarningList = std::vector<Warning>;

inline void warn(WarningList* sink, Severity sev, std::string msg) {
  if (sink) sink->push_back(Warning{sev, std::move(msg)});
}

// ---------------------------------------------------------------------------
// Axis-aligned box [a_1,b_1] x ... x [a_d,b_d]

struct Box {
  VectorXd lo;
  VectorXd hi;

  Box() = default;
  Box(VectorXd lo_, VectorXd hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    validate();
  }
  static Box interval(double a, double b) {
    return Box(VectorXd::Constant(1, a), VectorXd::Constant(1, b));
  }

  int dim() const { return static_cast<int>(lo.size()); }
  double width(int axis) const { return hi[axis] - lo[axis]; }
  double volume() const { return (hi - lo).prod(); }

  bool contains(const VectorXd& x, double tol = 0.0) const {
    if (x.size() != lo.size()) return false;
    for (int i = 0; i < x.size(); ++i)
      if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    return true;
  }

  VectorXd clamp(const VectorXd& x) const {
    return x.cwiseMax(lo).cwiseMin(hi);
  }

  VectorXd center() const { return 0.5 * (lo + hi); }

  VectorXd sample(Rng& rng) const {
    VectorXd x(dim());
    for (int i = 0; i < dim(); ++i)
      x[i] = lo[i] + uniform01(rng) * width(i);
    return x;
  }

  void validate() const {
    if (lo.size() != hi.size() || lo.size() == 0)
      throw ConfigError("box: dimension mismatch or empty");
    for (int i = 0; i < lo.size(); ++i) {
      if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || !(lo[i] < hi[i]))
        throw ConfigError("box: bounds must be finite with lo < hi");
    }
  }
};

}  // namespace orthocal
