#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "diffsens/schedule.hpp"
#include "diffsens/score_source.hpp"
#include "diffsens/types.hpp"

namespace diffsens {

enum class PathKind : std::uint32_t { ode = 0, sde = 1, sensitivity = 2 };

const char* to_string(PathKind kind) noexcept;

// Uniform grid s_i = s_start + i dt, i = 0..n_steps.
struct IntegrationGrid {
  double s_start = 0.0;
  double s_end = 0.0;
  double dt = 0.0;
  std::size_t n_steps = 0;

  // n_steps = round((s_end - s_start) / dt). Zero steps only when
  // s_start == s_end.
  static IntegrationGrid make(double s_start, double s_end, double dt);
  // [t0, t1_trunc] of the schedule.
  static IntegrationGrid full(const Schedule& sched, double dt);

  double time(std::size_t i) const noexcept { return s_start + static_cast<double>(i) * dt; }
  void check_within(const Schedule& sched) const;
};

struct IntegratorOptions {
  // Row shards integrated concurrently. Results do not depend on it.
  std::size_t workers = 1;
  // Keep every stride-th state (the terminal state is always kept).
  std::size_t stride = 1;
  // Multiplies the diffusion coefficient. 0 gives the noiseless Euler path
  // of the SDE drift; only tests should touch it.
  double noise_scale = 1.0;
};

struct SamplePath {
  IntegrationGrid grid;
  PathKind kind = PathKind::ode;
  std::uint64_t seed = 0;
  std::size_t stride = 1;
  // Stored states, states[j] is the batch at grid index j * stride; the last
  // entry is always the terminal state.
  std::vector<Batch> states;
  // SDE only: noise[i] is the Wiener increment (variance dt per coordinate)
  // used on step i.
  std::vector<Batch> noise;

  Eigen::Index batch_size() const { return states.front().rows(); }
  Eigen::Index dim() const { return states.front().cols(); }
  bool has_state(std::size_t i) const noexcept;
  const Batch& state(std::size_t i) const;
  const Batch& terminal() const { return states.back(); }
};

// Drift of the sampler given a precomputed score: the PF-ODE velocity for
// kind == ode, the reverse-SDE drift for kind == sde.
Batch drift_from_score(PathKind kind, const Schedule& sched, double s, const Batch& z, const Batch& score);

// a(s) Z + b(s) score(s, Z)
Batch velocity(const ScoreSource& src, const Schedule& sched, double s, const Batch& z);
// drift_z(s) Z + drift_score(s) score(s, Z)
Batch sde_drift(const ScoreSource& src, const Schedule& sched, double s, const Batch& z);

// Wiener increments for `rows` rows starting at global row `row_offset` on
// step `step`: sqrt(dt) times standard normals keyed by (seed, step, row).
Batch wiener_increments(std::uint64_t seed, std::size_t step, Eigen::Index row_offset,
                        Eigen::Index rows, Eigen::Index dim, double dt);

// Forward Euler on the probability-flow ODE.
SamplePath sample_ode(const ScoreSource& src, const Schedule& sched, const Batch& z0,
                      const IntegrationGrid& grid, const IntegratorOptions& opts = {});

// Euler-Maruyama on the reverse VP-SDE; all increments are stored so other
// models can be integrated under the same realization.
SamplePath sample_sde(const ScoreSource& src, const Schedule& sched, const Batch& z0,
                      const IntegrationGrid& grid, std::uint64_t seed,
                      const IntegratorOptions& opts = {});

// Euler-Maruyama under caller-supplied Wiener increments (one B x d batch per
// step, variance dt per coordinate), e.g. the noise of a stored path or
// increments of a finer path summed onto this grid.
SamplePath sample_sde_replay(const ScoreSource& src, const Schedule& sched, const Batch& z0,
                             const IntegrationGrid& grid, const std::vector<Batch>& increments,
                             const IntegratorOptions& opts = {});

// Terminal states only, no storage. SDE noise is regenerated from `seed`,
// so the result matches sample_sde(...).terminal() bit for bit.
Batch integrate_terminal(const ScoreSource& src, const Schedule& sched, const Batch& z0,
                         const IntegrationGrid& grid, PathKind kind, std::uint64_t seed,
                         const IntegratorOptions& opts = {});

// Throws IntegrationError if any entry is non-finite.
void check_finite(const Batch& b, const char* what, std::size_t step);

}  // namespace diffsens
