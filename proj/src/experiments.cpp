#include "diffsens/experiments.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>

#include "diffsens/errors.hpp"
#include "diffsens/path_io.hpp"
#include "diffsens/rng.hpp"
#include "diffsens/stats.hpp"

namespace diffsens {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string probes_label(const BackendConfig& b) {
  if (b.exact_density) return "exact";
  if (b.estimator.mode == DivergenceEstimator::Mode::exact) return "trace";
  return std::to_string(b.estimator.n_probes);
}

PropagationOptions propagation_options(const BackendConfig& b, std::size_t workers) {
  PropagationOptions po;
  po.density = b.exact_density ? PropagationOptions::Density::exact : PropagationOptions::Density::ccov;
  po.estimator = b.estimator;
  po.workers = workers;
  return po;
}

void require_analytic(const BackendConfig& b, const char* experiment) {
  if (b.kind != BackendConfig::Kind::analytic) {
    throw ConfigError(std::string(experiment) + " needs the analytic backend");
  }
}

void require_addition(const RunConfig& cfg, const char* experiment) {
  if (cfg.sign != 1) {
    throw ConfigError(std::string(experiment) +
                      " integrates the perturbed mixture exactly, which needs perturbation.sign = +1");
  }
}

json diagnostics_json(const StepDiagnostics& d) {
  return {{"max_abs_log_ratio", d.max_abs_log_ratio}, {"clamp_fraction", d.clamp_fraction}};
}

// Key for per-(sampler, dt) diagnostics in meta.json.
std::string run_key(PathKind kind, double dt, const std::string& probes) {
  return std::string(to_string(kind)) + "/dt=" + csv_number(dt) + "/n_probes=" + probes;
}

// Terminal states of the exact perturbed flow, one per eta, shared z0 and noise.
class PerturbedFlows {
 public:
  PerturbedFlows(const RunConfig& cfg, const Batch& z0) : cfg_(cfg), z0_(z0) {}

  const Batch& get(PathKind kind, double dt, double eta) {
    const auto key = std::make_tuple(static_cast<int>(kind), dt, eta);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const Schedule sched = cfg_.schedule(dt);
    const AnalyticScoreSource src(DiffusedMeasure(cfg_.rho.blend(cfg_.nu, eta), sched));
    IntegratorOptions opts;
    opts.workers = cfg_.workers;
    Batch term = integrate_terminal(src, sched, z0_, IntegrationGrid::full(sched, dt), kind, cfg_.seed, opts);
    return cache_.emplace(key, std::move(term)).first->second;
  }

 private:
  const RunConfig& cfg_;
  const Batch& z0_;
  std::map<std::tuple<int, double, double>, Batch> cache_;
};

// Shared by the remainder and Hutchinson sweeps.
void remainder_rows(const RunConfig& cfg, const Batch& z0, PathKind kind, double dt, const BackendConfig& backend,
                    PerturbedFlows& perturbed, const std::string& experiment, ExperimentReport& report) {
  const Schedule sched = cfg.schedule(dt);
  const auto grid = IntegrationGrid::full(sched, dt);
  const AnalyticScoreSource base(DiffusedMeasure(cfg.rho, sched));
  const Propagation prop = propagate_sensitivity(base, sched, z0, grid, kind, cfg.seed, cfg.perturbation(backend),
                                                 propagation_options(backend, cfg.workers));
  const std::string probes = probes_label(backend);
  report.diagnostics()[run_key(kind, dt, probes)] = diagnostics_json(prop.diagnostics);
  for (double eta : cfg.etas) {
    const Remainder r = taylor_remainder(perturbed.get(kind, dt, eta), prop.terminal, prop.psi, eta);
    report.add({experiment, to_string(kind), dt, eta, probes, "median_scaled_remainder", -1, stats::median(r.scaled)});
  }
}

Batch ot_targets(const RunConfig& cfg) {
  const auto& o = cfg.correlation.ot;
  const Eigen::Index n = o.n_targets > 0 ? o.n_targets : cfg.batch;
  const GaussianMixture target =
      o.target == OtConfig::Target::nu ? cfg.nu : cfg.rho.blend(cfg.nu, cfg.correlation.eta);
  return target.sample(NormalStream(cfg.seed, Substream::ot_targets), NormalStream(cfg.seed, Substream::mixture_draws),
                       0, n);
}

struct OtResult {
  Coupling coupling;
  Batch rays;
};

OtResult ot_rays(const RunConfig& cfg, const Batch& sources) {
  const Batch targets = ot_targets(cfg);
  Batch a = sources;
  Batch b = targets;
  if (cfg.correlation.ot.standardize) standardize_features(a, b);
  OtResult r;
  r.coupling = sinkhorn_log(a, b, cfg.correlation.ot.sinkhorn);
  r.rays = transport_rays(r.coupling, sources, targets);
  return r;
}

void add_coupling_rows(const RunConfig& cfg, const Coupling& c, const ReportRecord& proto, ExperimentReport& report) {
  auto row = [&](const char* name, double value) {
    ReportRecord r = proto;
    r.statistic = name;
    r.value = value;
    report.add(r);
  };
  row("ot_reg", cfg.correlation.ot.sinkhorn.reg);
  row("ot_iterations", static_cast<double>(c.iterations_used));
  row("ot_max_violation", c.max_violation);
  row("ot_converged", c.converged ? 1.0 : 0.0);
}

void add_correlations(const Vector& corr, const std::string& name, const ReportRecord& proto,
                      ExperimentReport& report) {
  Eigen::Index undefined = 0;
  for (Eigen::Index i = 0; i < corr.size(); ++i) {
    ReportRecord r = proto;
    r.statistic = name;
    r.index = i;
    r.value = corr[i];
    report.add(r);
    if (!std::isfinite(corr[i])) ++undefined;
  }
  ReportRecord med = proto;
  med.statistic = "median_" + name;
  med.value = stats::median(corr);
  report.add(med);
  ReportRecord und = proto;
  und.statistic = "undefined_" + name;
  und.value = static_cast<double>(undefined);
  report.add(und);
}

}  // namespace

std::unique_ptr<ScoreSource> make_source(const RunConfig& cfg, const BackendConfig& backend, const Schedule& sched) {
  if (backend.kind == BackendConfig::Kind::analytic) {
    return std::make_unique<AnalyticScoreSource>(DiffusedMeasure(cfg.rho, sched));
  }
  return std::make_unique<ExternalScoreSource>(backend.command, cfg.dim());
}

Batch base_samples(const RunConfig& cfg) {
  return NormalStream(cfg.seed, Substream::base_samples).batch(0, cfg.batch, cfg.dim());
}

ExperimentReport run_remainder_sweep(const RunConfig& cfg) {
  require_analytic(cfg.backend, "remainder-sweep");
  require_addition(cfg, "remainder-sweep");
  if (cfg.etas.empty()) throw ConfigError("remainder-sweep: sampling.eta must not be empty");
  ExperimentReport report("remainder", cfg.hash, cfg.seed);
  const Batch z0 = base_samples(cfg);
  PerturbedFlows perturbed(cfg, z0);
  for (PathKind kind : cfg.samplers) {
    if (kind == PathKind::sde && !cfg.backend.exact_density) {
      throw ConfigError("remainder-sweep: SDE paths need backend.density = \"exact\"");
    }
    for (double dt : cfg.dts) remainder_rows(cfg, z0, kind, dt, cfg.backend, perturbed, "remainder", report);
  }
  return report;
}

ExperimentReport run_hutchinson_sweep(const RunConfig& cfg) {
  require_analytic(cfg.backend, "hutchinson-sweep");
  require_addition(cfg, "hutchinson-sweep");
  if (cfg.etas.empty()) throw ConfigError("hutchinson-sweep: sampling.eta must not be empty");
  ExperimentReport report("hutchinson", cfg.hash, cfg.seed);
  const Batch z0 = base_samples(cfg);
  PerturbedFlows perturbed(cfg, z0);
  for (double dt : cfg.dts) {
    BackendConfig exact = cfg.backend;
    exact.exact_density = true;
    exact.estimator = DivergenceEstimator::exact();
    remainder_rows(cfg, z0, PathKind::ode, dt, exact, perturbed, "hutchinson", report);
    for (std::size_t n : cfg.probe_sweep) {
      BackendConfig hutch = cfg.backend;
      hutch.exact_density = false;
      hutch.estimator = DivergenceEstimator::hutchinson(n, cfg.seed);
      remainder_rows(cfg, z0, PathKind::ode, dt, hutch, perturbed, "hutchinson", report);
    }
  }
  return report;
}

ExperimentReport run_correlation_experiment(const RunConfig& cfg) {
  const auto& cc = cfg.correlation;
  const double dt = cfg.dts.front();
  const Schedule sched = cfg.schedule(dt);
  const auto grid = IntegrationGrid::full(sched, dt);
  const Batch z0 = base_samples(cfg);
  const AnalyticScoreSource reference(DiffusedMeasure(cfg.rho, sched));

  if (cc.mode == CorrelationConfig::Mode::backend) {
    require_analytic(cfg.backend, "correlate (backend mode) reference");
    if (!cfg.backend.exact_density) throw ConfigError("correlate: the reference backend needs exact densities");
    ExperimentReport report("correlate_backend", cfg.hash, cfg.seed);
    const auto candidate = make_source(cfg, cc.candidate, sched);
    if (candidate->dim() != reference.dim()) {
      throw ConfigError("correlate: candidate dimension " + std::to_string(candidate->dim()) +
                        " differs from reference dimension " + std::to_string(reference.dim()));
    }
    const Propagation ref = propagate_sensitivity(reference, sched, z0, grid, PathKind::ode, cfg.seed,
                                                  cfg.perturbation(cfg.backend),
                                                  propagation_options(cfg.backend, cfg.workers));
    const Propagation cand = propagate_sensitivity(*candidate, sched, z0, grid, PathKind::ode, cfg.seed,
                                                   cfg.perturbation(cc.candidate),
                                                   propagation_options(cc.candidate, cfg.workers));
    report.diagnostics()["reference"] = diagnostics_json(ref.diagnostics);
    report.diagnostics()["candidate"] = diagnostics_json(cand.diagnostics);
    const ReportRecord proto{"correlate_backend", "ode", dt, kNaN, probes_label(cc.candidate), "", -1, 0.0};
    add_correlations(stats::row_correlations(ref.psi, cand.psi, cc.statistic), "corr_candidate", proto, report);
    return report;
  }

  require_addition(cfg, "correlate (retrain mode)");
  ExperimentReport report("correlate_retrain", cfg.hash, cfg.seed);
  const auto backend = make_source(cfg, cfg.backend, sched);
  const Propagation prop = propagate_sensitivity(*backend, sched, z0, grid, PathKind::ode, cfg.seed,
                                                 cfg.perturbation(cfg.backend),
                                                 propagation_options(cfg.backend, cfg.workers));
  report.diagnostics()["backend"] = diagnostics_json(prop.diagnostics);

  IntegratorOptions io;
  io.workers = cfg.workers;
  const Batch base = cfg.backend.kind == BackendConfig::Kind::analytic
                         ? prop.terminal
                         : integrate_terminal(reference, sched, z0, grid, PathKind::ode, cfg.seed, io);
  PerturbedFlows perturbed(cfg, z0);
  const Batch delta = perturbed.get(PathKind::ode, dt, cc.eta) - base;

  const ReportRecord proto{"correlate_retrain", "ode", dt, cc.eta, probes_label(cfg.backend), "", -1, 0.0};
  add_correlations(stats::row_correlations(prop.psi, delta, cc.statistic), "corr_sensitivity", proto, report);
  const OtResult ot = ot_rays(cfg, base);
  add_correlations(stats::row_correlations(ot.rays, delta, cc.statistic), "corr_ot", proto, report);
  add_coupling_rows(cfg, ot.coupling, proto, report);
  return report;
}

ExperimentReport run_sample(const RunConfig& cfg, const fs::path& out_dir) {
  const double dt = cfg.dts.front();
  const Schedule sched = cfg.schedule(dt);
  const auto grid = IntegrationGrid::full(sched, dt);
  const auto src = make_source(cfg, cfg.backend, sched);
  const Batch z0 = base_samples(cfg);
  ExperimentReport report("sample", cfg.hash, cfg.seed);
  IntegratorOptions io;
  io.workers = cfg.workers;
  for (PathKind kind : cfg.samplers) {
    const SamplePath path = kind == PathKind::ode ? sample_ode(*src, sched, z0, grid, io)
                                                  : sample_sde(*src, sched, z0, grid, cfg.seed, io);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      write_path(path, out_dir / (std::string("path_") + to_string(kind) + ".bin"));
    }
    const Vector norms = path.terminal().rowwise().norm();
    const std::string sampler = to_string(kind);
    report.add({"sample", sampler, dt, kNaN, "", "n_steps", -1, static_cast<double>(grid.n_steps)});
    report.add({"sample", sampler, dt, kNaN, "", "median_terminal_norm", -1, stats::median(norms)});
    for (Eigen::Index j = 0; j < path.dim(); ++j) {
      report.add({"sample", sampler, dt, kNaN, "", "terminal_mean", j, path.terminal().col(j).mean()});
    }
  }
  return report;
}

ExperimentReport run_sensitivity(const RunConfig& cfg, const fs::path& out_dir) {
  const double dt = cfg.dts.front();
  const Schedule sched = cfg.schedule(dt);
  const auto grid = IntegrationGrid::full(sched, dt);
  const auto src = make_source(cfg, cfg.backend, sched);
  const Batch z0 = base_samples(cfg);
  const PerturbationSpec spec = cfg.perturbation(cfg.backend);
  ExperimentReport report("sensitivity", cfg.hash, cfg.seed);
  IntegratorOptions io;
  io.workers = cfg.workers;
  for (PathKind kind : cfg.samplers) {
    const SamplePath path = kind == PathKind::ode ? sample_ode(*src, sched, z0, grid, io)
                                                  : sample_sde(*src, sched, z0, grid, cfg.seed, io);
    std::optional<Matrix> logp;
    if (!cfg.backend.exact_density) {
      if (kind != PathKind::ode) {
        throw ConfigError("sensitivity: SDE paths need a backend with exact densities");
      }
      logp = integrate_log_density(*src, sched, path, cfg.backend.estimator, standard_normal_log_density(z0),
                                   cfg.workers);
    }
    const SensitivityPath sens =
        integrate_sample_sensitivity(*src, sched, path, spec, logp ? &*logp : nullptr, cfg.workers);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      write_sensitivity(sens, out_dir / (std::string("psi_") + to_string(kind) + ".bin"));
    }
    const std::string sampler = to_string(kind);
    const std::string probes = probes_label(cfg.backend);
    const Vector norms = sens.terminal().rowwise().norm();
    for (Eigen::Index i = 0; i < norms.size(); ++i) {
      report.add({"sensitivity", sampler, dt, kNaN, probes, "psi_norm", i, norms[i]});
    }
    report.add({"sensitivity", sampler, dt, kNaN, probes, "median_psi_norm", -1, stats::median(norms)});
    double worst = 0.0;
    double clamped = 0.0;
    for (const auto& d : sens.diagnostics) {
      worst = std::max(worst, d.max_abs_log_ratio);
      clamped = std::max(clamped, d.clamp_fraction);
    }
    report.add({"sensitivity", sampler, dt, kNaN, probes, "max_abs_log_ratio", -1, worst});
    report.add({"sensitivity", sampler, dt, kNaN, probes, "max_clamp_fraction", -1, clamped});
  }
  return report;
}

ExperimentReport run_ot_baseline(const RunConfig& cfg) {
  const double dt = cfg.dts.front();
  const Schedule sched = cfg.schedule(dt);
  const auto src = make_source(cfg, cfg.backend, sched);
  IntegratorOptions io;
  io.workers = cfg.workers;
  const Batch base = integrate_terminal(*src, sched, base_samples(cfg), IntegrationGrid::full(sched, dt),
                                        PathKind::ode, cfg.seed, io);
  const OtResult ot = ot_rays(cfg, base);
  ExperimentReport report("ot_baseline", cfg.hash, cfg.seed);
  const ReportRecord proto{"ot_baseline", "ode", dt, cfg.correlation.eta, "", "", -1, 0.0};
  add_coupling_rows(cfg, ot.coupling, proto, report);
  const Vector norms = ot.rays.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    ReportRecord r = proto;
    r.statistic = "ray_norm";
    r.index = i;
    r.value = norms[i];
    report.add(r);
  }
  return report;
}

}  // namespace diffsens
