#include "orthocal/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace orthocal {

namespace {

double penalized(const Objective& f, const Box& bounds, const VectorXd& x,
                 double penalty_scale) {
  VectorXd c = bounds.clamp(x);
  double dist2 = (x - c).squaredNorm();
  return f(c) + penalty_scale * dist2;
}

double simplex_diameter(const std::vector<VectorXd>& verts) {
  double diam = 0.0;
  for (size_t i = 0; i < verts.size(); ++i)
    for (size_t j = i + 1; j < verts.size(); ++j)
      diam = std::max(diam, (verts[i] - verts[j]).norm());
  return diam;
}

}  // namespace

NelderMeadResult nelder_mead(const Objective& f, const VectorXd& start,
                             const Box& bounds, const NelderMeadOptions& opts) {
  const int n = static_cast<int>(start.size());
  if (n != bounds.dim())
    throw DimensionError("nelder_mead: start/bounds dimension mismatch");

  const double penalty = 1e6;
  auto eval = [&](const VectorXd& x) { return penalized(f, bounds, x, penalty); };

  std::vector<VectorXd> verts(n + 1);
  std::vector<double> fv(n + 1);
  verts[0] = bounds.clamp(start);
  fv[0] = eval(verts[0]);
  for (int i = 0; i < n; ++i) {
    VectorXd v = verts[0];
    double step = opts.initial_step * bounds.width(i);
    v[i] += (v[i] + step <= bounds.hi[i]) ? step : -step;
    verts[i + 1] = v;
    fv[i + 1] = eval(v);
  }

  const double alpha = 1.0, gamma = 2.0, rho = 0.5, shrink = 0.5;
  std::vector<int> order(n + 1);
  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return fv[a] < fv[b]; });
    {
      std::vector<VectorXd> vs(n + 1);
      std::vector<double> fs(n + 1);
      for (int i = 0; i <= n; ++i) {
        vs[i] = verts[order[i]];
        fs[i] = fv[order[i]];
      }
      verts.swap(vs);
      fv.swap(fs);
    }
    if (simplex_diameter(verts) <= opts.simplex_tol) break;

    VectorXd centroid = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += verts[i];
    centroid /= n;

    VectorXd xr = centroid + alpha * (centroid - verts[n]);
    double fr = eval(xr);
    if (fr < fv[0]) {
      VectorXd xe = centroid + gamma * (xr - centroid);
      double fe = eval(xe);
      if (fe < fr) {
        verts[n] = xe; fv[n] = fe;
      } else {
        verts[n] = xr; fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      verts[n] = xr; fv[n] = fr;
    } else {
      bool outside = fr < fv[n];
      VectorXd xc = outside ? centroid + rho * (xr - centroid)
                            : centroid + rho * (verts[n] - centroid);
      double fc = eval(xc);
      if (fc < (outside ? fr : fv[n])) {
        verts[n] = xc; fv[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          verts[i] = verts[0] + shrink * (verts[i] - verts[0]);
          fv[i] = eval(verts[i]);
        }
      }
    }
  }

  int best = static_cast<int>(
      std::min_element(fv.begin(), fv.end()) - fv.begin());
  NelderMeadResult res;
  res.x = bounds.clamp(verts[best]);
  res.value = fv[best];
  res.iters = iter;
  res.converged = simplex_diameter(verts) <= opts.simplex_tol;
  return res;
}

MatrixXd latin_hypercube(int n, const Box& bounds, Rng& rng) {
  const int d = bounds.dim();
  MatrixXd pts(n, d);
  std::vector<int> perm(n);
  for (int a = 0; a < d; ++a) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) {
      double u = (perm[i] + uniform01(rng)) / n;
      pts(i, a) = bounds.lo[a] + u * bounds.width(a);
    }
  }
  return pts;
}

NelderMeadResult multistart_minimize(const Objective& f, const Box& bounds,
                                     Rng& rng, const MultistartOptions& opts) {
  MatrixXd starts = latin_hypercube(opts.starts, bounds, rng);
  NelderMeadResult best;
  bool any = false;
  int converged_count = 0;
  for (int s = 0; s < opts.starts; ++s) {
    NelderMeadResult r =
        nelder_mead(f, starts.row(s).transpose(), bounds, opts.local);
    if (r.converged) ++converged_count;
    if (!any || r.value < best.value) {
      best = r;
      any = true;
    }
  }
  if (converged_count == 0) {
    std::ostringstream msg;
    msg << "multistart_minimize: no start converged in " << opts.local.max_iters
        << " iterations (best value " << (any ? best.value : 0.0) << ")";
    throw OptimizationError(msg.str());
  }
  return best;
}

}  // namespace orthocal
