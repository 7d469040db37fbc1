#include "orthocal/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "orthocal/optim.hpp"

namespace orthocal {

double l2_loss(const std::function<VectorXd(const VectorXd&)>& system,
               const ComputerModel& m, const VectorXd& t,
               const QuadratureRulePtr& rule) {
  if (!m.theta_domain.contains(t, 1e-9))
    throw ContractError("l2_loss: t outside Theta");
  double total = 0.0;
  for (int i = 0; i < rule->size(); ++i) {
    VectorXd x = rule->nodes.row(i).transpose();
    VectorXd r = system(x) - m.eval(x, t);
    total += rule->weights[i] * r.squaredNorm();
  }
  return total;
}

double l2_loss(const FieldObservations& field, const ComputerModel& m,
               const VectorXd& t) {
  if (!m.theta_domain.contains(t, 1e-9))
    throw ContractError("l2_loss: t outside Theta");
  MatrixXd r = field.values - m.eval_batch(field.design.points, t);
  return r.squaredNorm() / (field.size() * field.outcomes());
}

VectorXd estimate_anchor(const FieldObservations& field, const ComputerModel& m,
                         Rng& rng, const AnchorOptions& opts) {
  if (field.size() < 1) throw ContractError("estimate_anchor: empty field data");
  auto objective = [&](const VectorXd& t) { return l2_loss(field, m, t); };
  MultistartOptions ms;
  ms.starts = opts.starts;
  ms.local.simplex_tol = opts.simplex_tol;
  ms.local.max_iters = opts.max_iters;
  NelderMeadResult best;
  try {
    best = multistart_minimize(objective, m.theta_domain, rng, ms);
  } catch (const OptimizationError& e) {
    std::ostringstream msg;
    msg << "estimate_anchor: " << e.what() << " (n=" << field.size()
        << ", q=" << field.outcomes() << ")";
    throw OptimizationError(msg.str());
  }
  return m.theta_domain.clamp(best.x);
}

namespace {

double data_log_likelihood(const MatrixXd& residuals,
                           const MatrixXd& bias_design, const MatrixXd& W) {
  MatrixXd e = (residuals - bias_design) * W;  // W symmetric
  return -0.5 * e.squaredNorm();
}

}  // namespace

Chain run_projection_sampler(const FieldObservations& field,
                             const ComputerModel& m, const BiasPrior& prior,
                             const ThetaPrior& theta_prior,
                             const ConstraintSet& cs, const NoiseModel& noise,
                             const SamplerOptions& opts, Rng& rng) {
  const int p = m.params();
  const int n = field.size();
  const int q = field.outcomes();
  if (opts.iterations <= opts.burnin || opts.burnin < 0)
    throw ContractError("run_projection_sampler: need iterations > burnin >= 0");
  if (prior.outcomes() != q || prior.design_size() != n)
    throw DimensionError("run_projection_sampler: prior/field shape mismatch");
  if (cs.constraints() != p)
    throw DimensionError("run_projection_sampler: constraint count != p");
  if (!cs.has_design_gradients())
    throw ContractError(
        "run_projection_sampler: constraint set needs design gradients");

  const MatrixXd W = noise.inv_sqrt();
  const auto& rule = cs.gradients.front().rule;

  // Projection machinery fixed at the anchor for the whole chain.
  MatrixXd fd_projector, fd_constraints;
  MatrixXd moment_constraints;
  if (opts.projection == ProjectionMethod::finite_dim) {
    if (!prior.is_gaussian_conditional())
      throw ContractError(
          "run_projection_sampler: finite_dim projection needs a "
          "Gaussian-conditional prior");
    fd_constraints =
        stacked_constraint_matrix(cs, n, MomentConstraintMode::design);
    MatrixXd cond = prior.conditional_covariance();
    // tiny ridge keeps the whitening defined; constraints still hold exactly
    cond.diagonal().array() += 1e-10 * std::max(cond.trace() / cond.rows(), 1e-300);
    fd_projector = whitened_projector(cond, fd_constraints, nullptr);
  } else if (opts.projection == ProjectionMethod::moment) {
    moment_constraints = stacked_constraint_matrix(cs, n, opts.moment_mode);
  }

  ChainState state;
  state.theta = cs.anchor;
  {
    VectorXd widths(p);
    for (int j = 0; j < p; ++j)
      widths[j] = opts.initial_proposal_rel * m.theta_domain.width(j);
    state.proposal_cov = widths.array().square().matrix().asDiagonal();
  }
  AdaptiveProposal proposal(state.proposal_cov);
  if (opts.burnin == 0) proposal.freeze();

  const long kept_total = opts.iterations - opts.burnin;
  Chain chain;
  chain.theta.resize(kept_total, p);
  chain.loglik.resize(kept_total);
  chain.constraint_residual.resize(kept_total);
  chain.accepted.resize(kept_total);
  if (opts.record_bias) chain.bias.reserve(kept_total);

  long post_accepts = 0;
  for (long iter = 0; iter < opts.iterations; ++iter) {
    MatrixXd residuals =
        field.values - m.eval_batch(field.design.points, state.theta);

    BiasDraw raw = prior.conditional_draw(residuals, rng);
    double rel_residual = 0.0;
    ProjectionReport report;
    switch (opts.projection) {
      case ProjectionMethod::functional: {
        auto [proj, rep] = functional_project(raw, cs, &chain.warnings);
        state.bias = std::move(proj);
        rel_residual = rep.max_relative_residual;
        report = std::move(rep);
        break;
      }
      case ProjectionMethod::finite_dim: {
        VectorXd v = fd_projector * stack_bias(raw);
        rel_residual = stacked_constraint_residual(v, fd_constraints);
        state.bias = unstack_bias(v, n, rule, q);
        state.bias.provenance = BiasDraw::Provenance::projected;
        break;
      }
      case ProjectionMethod::moment: {
        const long dim = static_cast<long>(n + rule->size()) * q;
        int M = static_cast<int>(opts.moment_sample_multiplier * dim);
        MomentProjectionOptions mopts;
        mopts.mode = opts.moment_mode;
        state.bias = moment_project_nongaussian(prior, residuals, cs, M, rng,
                                                mopts, &chain.warnings);
        rel_residual =
            stacked_constraint_residual(stack_bias(state.bias), moment_constraints);
        break;
      }
    }
    if (!(rel_residual <= opts.constraint_tol)) {
      std::ostringstream msg;
      msg << "run_projection_sampler: projected bias violates the "
             "orthogonality constraint at iteration "
          << iter << " (relative residual " << rel_residual << ")";
      throw NumericalError(msg.str());
    }

    const MatrixXd& bias_design = state.bias.design_values;
    auto log_target = [&](const VectorXd& t) {
      double lp = theta_prior.log_density(t);
      if (!std::isfinite(lp)) return lp;
      if (opts.likelihood_enabled) {
        MatrixXd r = field.values - m.eval_batch(field.design.points, t);
        lp += data_log_likelihood(r, bias_design, W);
      }
      return lp;
    };

    double current_lp = theta_prior.log_density(state.theta);
    double current_ll = 0.0;
    if (opts.likelihood_enabled) {
      current_ll = data_log_likelihood(residuals, bias_design, W);
      current_lp += current_ll;
    }
    if (!std::isfinite(current_lp)) {
      std::ostringstream msg;
      msg << "run_projection_sampler: non-finite log target at iteration "
          << iter;
      throw NumericalError(msg.str());
    }

    bool accepted = mh_step(log_target, state.theta, current_lp, proposal, rng);
    if (accepted && opts.likelihood_enabled)
      current_ll = current_lp - theta_prior.log_density(state.theta);

    if (iter < opts.burnin) {
      proposal.observe(state.theta);
      if (iter + 1 == opts.burnin) proposal.freeze();
    }

    ++state.iter;
    if (accepted) ++state.accept_count;
    if (iter >= opts.burnin) {
      long k = iter - opts.burnin;
      chain.theta.row(k) = state.theta.transpose();
      chain.loglik[k] = current_ll;
      chain.constraint_residual[k] = rel_residual;
      chain.accepted[k] = accepted ? 1 : 0;
      if (accepted) ++post_accepts;
      if (opts.record_bias) chain.bias.push_back(state.bias);
      if (opts.projection == ProjectionMethod::functional)
        chain.reports.push_back(report);
    }
  }
  state.proposal_cov = proposal.covariance();

  chain.acceptance_rate = static_cast<double>(post_accepts) / kept_total;
  if (chain.acceptance_rate < 0.05 || chain.acceptance_rate > 0.7) {
    std::ostringstream msg;
    msg << "acceptance rate " << chain.acceptance_rate
        << " outside [0.05, 0.7] after burn-in";
    warn(&chain.warnings, Severity::warning, msg.str());
  }
  return chain;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double prob) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  double h = prob * (n - 1);
  size_t lo = static_cast<size_t>(std::floor(h));
  size_t hi = std::min(lo + 1, n - 1);
  double frac = h - lo;
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

PosteriorSummary summarize_chain(const Chain& chain, double level) {
  const long len = chain.length();
  if (len < 100)
    throw ContractError("summarize_chain: need at least 100 draws");
  if (level <= 0.0 || level >= 1.0)
    throw ContractError("summarize_chain: level must be in (0, 1)");
  const int p = chain.params();

  PosteriorSummary s;
  s.level = level;
  s.acceptance_rate = chain.acceptance_rate;
  s.mean.resize(p);
  s.sd.resize(p);
  s.ci_lower.resize(p);
  s.ci_upper.resize(p);
  s.ess.resize(p);
  double tail = 0.5 * (1.0 - level);
  for (int j = 0; j < p; ++j) {
    VectorXd col = chain.theta.col(j);
    s.mean[j] = col.mean();
    s.sd[j] = std::sqrt((col.array() - s.mean[j]).square().sum() /
                        std::max<long>(1, len - 1));
    std::vector<double> sorted(col.data(), col.data() + len);
    std::sort(sorted.begin(), sorted.end());
    s.ci_lower[j] = quantile_sorted(sorted, tail);
    s.ci_upper[j] = quantile_sorted(sorted, 1.0 - tail);
    s.ess[j] = effective_sample_size(col);
    if (s.mean[j] < s.ci_lower[j] || s.mean[j] > s.ci_upper[j]) {
      std::ostringstream msg;
      msg << "posterior mean outside the credible interval for coordinate "
          << j + 1 << " (multimodal chain?)";
      warn(&s.warnings, Severity::warning, msg.str());
    }
  }
  return s;
}

}  // namespace orthocal
