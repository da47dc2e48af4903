#include "diffsens/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "diffsens/errors.hpp"
#include "diffsens/parallel.hpp"

namespace diffsens {

namespace {

struct StepCount {
  double max_abs_log_ratio = 0.0;
  std::size_t clamped = 0;
};

// psi += dt [c g + a psi + c J psi] at grid time s, with z, the rho score
// and rho log-density already evaluated at z.
StepCount advance_psi(const ScoreSource& src, const Schedule& sched, PathKind kind, double s, double dt,
                      const Batch& z, const Batch& rho_score, const Vector& rho_logp,
                      const GaussianMixture& nu_t, const PerturbationSpec& spec, Batch& psi) {
  double cz, cs;
  if (kind == PathKind::ode) {
    const auto [a, b] = sched.ode_coefficients(s);
    cz = a;
    cs = b;
  } else {
    const auto c = sched.sde_coefficients(s);
    cz = c.drift_z;
    cs = c.drift_score;
  }
  const Vector nu_logp = nu_t.log_density_batch(z);
  const Batch nu_score = nu_t.score_batch(z);
  StepCount count;
  Batch g(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double log_ratio = nu_logp[i] - rho_logp[i];
    if (!std::isfinite(log_ratio)) throw IntegrationError("non-finite density ratio", 0);
    bool clamped = false;
    const double w = clamped_ratio(log_ratio, spec.ratio_clamp, &clamped);
    count.max_abs_log_ratio = std::max(count.max_abs_log_ratio, std::abs(log_ratio));
    if (clamped) ++count.clamped;
    g.row(i) = (static_cast<double>(spec.sign) * w) * (nu_score.row(i) - rho_score.row(i));
  }
  const Batch jv = src.score_jvp_batch(s, z, psi);
  psi += dt * (cs * g + cz * psi + cs * jv);
  return count;
}

void check_path_inputs(const ScoreSource& src, const SamplePath& path, const PerturbationSpec& spec,
                       const Matrix* rho_logp) {
  spec.validate();
  if (path.kind == PathKind::sensitivity) throw UsageError("sensitivity needs an ode or sde sample path");
  if (path.stride != 1) throw UsageError("sensitivity integration needs every state (stride 1)");
  if (spec.nu.dim() != path.dim() || src.dim() != path.dim()) {
    throw DomainError("perturbation measure, score source and path disagree on dimension");
  }
  if (rho_logp) {
    if (rho_logp->rows() != static_cast<Eigen::Index>(path.grid.n_steps + 1) ||
        rho_logp->cols() != path.batch_size()) {
      throw DomainError("log-density table shape does not match the path");
    }
  } else if (!src.has_exact_density()) {
    throw UsageError(
        "no density channel: the score source has no closed-form density and no log-density table was "
        "given");
  }
}

}  // namespace

void PerturbationSpec::validate() const {
  if (sign != 1 && sign != -1) throw DomainError("perturbation sign must be +1 or -1");
  if (ratio_clamp && !(ratio_clamp->lo > 0.0 && ratio_clamp->lo <= ratio_clamp->hi)) {
    throw DomainError("ratio clamp needs 0 < lo <= hi");
  }
}

double clamped_ratio(double log_ratio, const std::optional<RatioClamp>& clamp, bool* clamped) {
  if (clamped) *clamped = false;
  if (clamp) {
    if (log_ratio >= std::log(clamp->hi)) {
      if (clamped) *clamped = log_ratio > std::log(clamp->hi);
      return clamp->hi;
    }
    if (log_ratio <= std::log(clamp->lo)) {
      if (clamped) *clamped = log_ratio < std::log(clamp->lo);
      return clamp->lo;
    }
  }
  return std::exp(log_ratio);
}

Vector score_sensitivity(double rho_logp, const Vector& rho_score, double nu_logp, const Vector& nu_score,
                         const PerturbationSpec& spec) {
  if (!std::isfinite(rho_logp) || !std::isfinite(nu_logp) || !rho_score.allFinite() || !nu_score.allFinite()) {
    throw DomainError("score_sensitivity: non-finite input");
  }
  if (rho_score.size() != nu_score.size()) throw DomainError("score_sensitivity: dimension mismatch");
  const double w = clamped_ratio(nu_logp - rho_logp, spec.ratio_clamp);
  return (static_cast<double>(spec.sign) * w) * (nu_score - rho_score);
}

Vector velocity_sensitivity(const Schedule& sched, double s, const Vector& g, PathKind kind) {
  if (kind == PathKind::sde) return sched.sde_coefficients(s).drift_score * g;
  return sched.ode_coefficients(s).b * g;
}

SensitivityPath integrate_sample_sensitivity(const ScoreSource& src, const Schedule& sched,
                                             const SamplePath& path, const PerturbationSpec& spec,
                                             const Matrix* rho_logp, std::size_t workers) {
  check_path_inputs(src, path, spec, rho_logp);
  const std::size_t n = path.grid.n_steps;
  const Eigen::Index rows = path.batch_size();
  const DiffusedMeasure nu_measure(spec.nu, sched);

  SensitivityPath out;
  out.grid = path.grid;
  out.base_kind = path.kind;
  out.psi.assign(n + 1, Batch::Zero(rows, path.dim()));
  std::vector<std::vector<StepCount>> counts;

  if (!src.concurrent()) workers = 1;
  workers = std::clamp<std::size_t>(workers, 1, static_cast<std::size_t>(rows));
  counts.resize(workers);
  std::vector<Eigen::Index> starts(workers + 1);
  for (std::size_t w = 0; w <= workers; ++w) {
    starts[w] = static_cast<Eigen::Index>(static_cast<std::size_t>(rows) * w / workers);
  }
  for_each_shard(static_cast<Eigen::Index>(workers), workers, [&](Eigen::Index lo, Eigen::Index hi) {
    for (Eigen::Index w = lo; w < hi; ++w) {
      const Eigen::Index begin = starts[static_cast<std::size_t>(w)];
      const Eigen::Index len = starts[static_cast<std::size_t>(w) + 1] - begin;
      auto& shard_counts = counts[static_cast<std::size_t>(w)];
      Batch psi = Batch::Zero(len, path.dim());
      for (std::size_t i = 0; i < n; ++i) {
        const double s = path.grid.time(i);
        const Batch z = path.state(i).middleRows(begin, len);
        const Batch score = src.score_batch(s, z);
        const Vector logp = rho_logp ? Vector(rho_logp->block(static_cast<Eigen::Index>(i), begin, 1, len).transpose())
                                     : src.log_density_batch(s, z);
        try {
          shard_counts.push_back(advance_psi(src, sched, path.kind, s, path.grid.dt, z, score, logp,
                                             nu_measure.at(s), spec, psi));
        } catch (const IntegrationError& e) {
          throw IntegrationError("non-finite density ratio", i);
        }
        check_finite(psi, "sensitivity", i);
        out.psi[i + 1].middleRows(begin, len) = psi;
      }
    }
  });

  out.diagnostics.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t clamped = 0;
    for (const auto& shard : counts) {
      out.diagnostics[i].max_abs_log_ratio = std::max(out.diagnostics[i].max_abs_log_ratio, shard[i].max_abs_log_ratio);
      clamped += shard[i].clamped;
    }
    out.diagnostics[i].clamp_fraction = static_cast<double>(clamped) / static_cast<double>(rows);
  }
  return out;
}

Batch first_order_samples(const Batch& base_terminal, const Batch& psi_terminal, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("first_order_samples: eta outside [0, 1]");
  if (base_terminal.rows() != psi_terminal.rows() || base_terminal.cols() != psi_terminal.cols()) {
    throw DomainError("first_order_samples: shape mismatch");
  }
  return base_terminal + eta * psi_terminal;
}

Remainder taylor_remainder(const Batch& perturbed_terminal, const Batch& base_terminal,
                           const Batch& psi_terminal, double eta) {
  if (!(eta > 0.0)) throw DomainError("taylor_remainder: eta must be positive");
  if (perturbed_terminal.rows() != base_terminal.rows() || perturbed_terminal.cols() != base_terminal.cols() ||
      psi_terminal.rows() != base_terminal.rows() || psi_terminal.cols() != base_terminal.cols()) {
    throw DomainError("taylor_remainder: shape mismatch");
  }
  Remainder r;
  r.norm.resize(base_terminal.rows());
  for (Eigen::Index i = 0; i < base_terminal.rows(); ++i) {
    const Eigen::RowVectorXd diff =
        (perturbed_terminal.row(i) - base_terminal.row(i)) - eta * psi_terminal.row(i);
    r.norm[i] = diff.norm();
  }
  r.scaled = r.norm / eta;
  return r;
}

Propagation propagate_sensitivity(const ScoreSource& src, const Schedule& sched, const Batch& z0,
                                  const IntegrationGrid& grid, PathKind kind, std::uint64_t seed,
                                  const PerturbationSpec& spec, const PropagationOptions& opts) {
  spec.validate();
  if (kind == PathKind::sensitivity) throw UsageError("propagation needs an ode or sde kind");
  using Density = PropagationOptions::Density;
  if (opts.density == Density::ccov && kind != PathKind::ode) {
    throw UsageError(
        "log-densities along SDE paths need a closed-form density channel; CCoV is only defined on ODE paths");
  }
  if (opts.density == Density::exact && !src.has_exact_density()) {
    throw UsageError("exact density mode needs a score source with a closed-form density");
  }
  if (z0.cols() != src.dim() || spec.nu.dim() != src.dim()) throw DomainError("dimension mismatch");
  if (z0.rows() == 0 || !z0.allFinite()) throw DomainError("initial batch must be non-empty and finite");
  grid.check_within(sched);
  if (opts.initial_logp && opts.initial_logp->size() != z0.rows()) {
    throw DomainError("initial log-density size mismatch");
  }

  const DiffusedMeasure nu_measure(spec.nu, sched);
  const Eigen::Index rows = z0.rows();
  Propagation out;
  out.terminal = z0;
  out.psi = Batch::Zero(rows, z0.cols());
  out.logp = opts.initial_logp ? *opts.initial_logp : standard_normal_log_density(z0);

  const std::size_t workers =
      std::clamp<std::size_t>(src.concurrent() ? opts.workers : 1, 1, static_cast<std::size_t>(rows));
  std::vector<StepCount> worst(workers);
  std::vector<std::vector<std::size_t>> clamped_per_step(workers, std::vector<std::size_t>(grid.n_steps, 0));
  std::vector<Eigen::Index> starts(workers + 1);
  for (std::size_t w = 0; w <= workers; ++w) {
    starts[w] = static_cast<Eigen::Index>(static_cast<std::size_t>(rows) * w / workers);
  }

  for_each_shard(static_cast<Eigen::Index>(workers), workers, [&](Eigen::Index lo, Eigen::Index hi) {
    for (Eigen::Index w = lo; w < hi; ++w) {
      const auto ws = static_cast<std::size_t>(w);
      const Eigen::Index begin = starts[ws];
      const Eigen::Index len = starts[ws + 1] - begin;
      Batch z = z0.middleRows(begin, len);
      Batch psi = Batch::Zero(len, z0.cols());
      Vector logp = out.logp.segment(begin, len);
      for (std::size_t i = 0; i < grid.n_steps; ++i) {
        const double s = grid.time(i);
        const double dt = grid.dt;
        const Batch score = src.score_batch(s, z);
        const Vector rho_logp = opts.density == Density::exact ? src.log_density_batch(s, z) : logp;
        StepCount c;
        try {
          c = advance_psi(src, sched, kind, s, dt, z, score, rho_logp, nu_measure.at(s), spec, psi);
        } catch (const IntegrationError&) {
          throw IntegrationError("non-finite density ratio", i);
        }
        worst[ws].max_abs_log_ratio = std::max(worst[ws].max_abs_log_ratio, c.max_abs_log_ratio);
        clamped_per_step[ws][i] = c.clamped;
        if (opts.density == Density::ccov) {
          logp -= dt * divergence(src, sched, s, z, opts.estimator, i);
        }
        if (kind == PathKind::ode) {
          z += dt * drift_from_score(kind, sched, s, z, score);
        } else {
          const Batch dw = wiener_increments(seed, i, begin, len, z.cols(), dt);
          const double g = sched.sde_coefficients(s).diffusion;
          z += dt * drift_from_score(kind, sched, s, z, score) + g * dw;
        }
        check_finite(z, "sample state", i);
        check_finite(psi, "sensitivity", i);
      }
      out.terminal.middleRows(begin, len) = z;
      out.psi.middleRows(begin, len) = psi;
      out.logp.segment(begin, len) = logp;
    }
  });

  for (std::size_t w = 0; w < workers; ++w) {
    out.diagnostics.max_abs_log_ratio = std::max(out.diagnostics.max_abs_log_ratio, worst[w].max_abs_log_ratio);
  }
  for (std::size_t i = 0; i < grid.n_steps; ++i) {
    std::size_t clamped = 0;
    for (std::size_t w = 0; w < workers; ++w) clamped += clamped_per_step[w][i];
    out.diagnostics.clamp_fraction =
        std::max(out.diagnostics.clamp_fraction, static_cast<double>(clamped) / static_cast<double>(rows));
  }
  if (opts.density == Density::exact) {
    out.logp = src.log_density_batch(grid.time(grid.n_steps), out.terminal);
  }
  return out;
}

}  // namespace diffsens
