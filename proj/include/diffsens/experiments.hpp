#pragma once

#include <filesystem>
#include <memory>

#include "diffsens/config.hpp"
#include "diffsens/report.hpp"
#include "diffsens/score_source.hpp"

namespace diffsens {

// Score source for a configured backend. Analytic backends wrap rho diffused
// under `sched`; external ones launch the configured command.
std::unique_ptr<ScoreSource> make_source(const RunConfig& cfg, const BackendConfig& backend,
                                         const Schedule& sched);

// The B x d initial noise batch shared by every experiment of a run.
Batch base_samples(const RunConfig& cfg);

// Median |R(eta)| / eta for every (sampler, dt, eta).
ExperimentReport run_remainder_sweep(const RunConfig& cfg);
// Same remainders on ODE paths with change-of-variables densities for each
// probe count in cfg.probe_sweep, plus the closed-form density column.
ExperimentReport run_hutchinson_sweep(const RunConfig& cfg);
// Per-sample correlations: sensitivity vs actual change alongside OT rays
// (retrain mode), or reference vs candidate sensitivities (backend mode).
ExperimentReport run_correlation_experiment(const RunConfig& cfg);

// Base sample paths for each sampler at the first step size; path artifacts
// go to out_dir when it is non-empty.
ExperimentReport run_sample(const RunConfig& cfg, const std::filesystem::path& out_dir);
// Stored-path sensitivities for each sampler at the first step size.
ExperimentReport run_sensitivity(const RunConfig& cfg, const std::filesystem::path& out_dir);
// Entropic OT coupling between base ODE samples and the configured targets.
ExperimentReport run_ot_baseline(const RunConfig& cfg);

}  // namespace diffsens
