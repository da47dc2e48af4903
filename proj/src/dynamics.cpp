#include "diffsens/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "diffsens/errors.hpp"
#include "diffsens/parallel.hpp"
#include "diffsens/rng.hpp"

namespace diffsens {

const char* to_string(PathKind kind) noexcept {
  switch (kind) {
    case PathKind::ode: return "ode";
    case PathKind::sde: return "sde";
    case PathKind::sensitivity: return "sensitivity";
  }
  return "?";
}

IntegrationGrid IntegrationGrid::make(double s_start, double s_end, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("step size must be positive");
  if (!(s_end >= s_start)) throw DomainError("grid end precedes its start");
  IntegrationGrid g;
  g.s_start = s_start;
  g.s_end = s_end;
  g.dt = dt;
  g.n_steps = static_cast<std::size_t>(std::llround((s_end - s_start) / dt));
  if (g.n_steps == 0 && s_end > s_start) {
    throw DomainError("step size larger than twice the integration interval");
  }
  return g;
}

IntegrationGrid IntegrationGrid::full(const Schedule& sched, double dt) {
  return make(sched.t0(), sched.t1_trunc(), dt);
}

void IntegrationGrid::check_within(const Schedule& sched) const {
  constexpr double slack = 1e-9;
  if (s_start < sched.t0() || time(n_steps) > sched.t1_trunc() + slack * std::max(1.0, dt)) {
    std::ostringstream msg;
    msg << "grid [" << s_start << ", " << time(n_steps) << "] leaves [t0, t1_trunc] = [" << sched.t0()
        << ", " << sched.t1_trunc() << "]";
    throw DomainError(msg.str());
  }
}

bool SamplePath::has_state(std::size_t i) const noexcept {
  return i == grid.n_steps || (i % stride == 0 && i / stride < states.size());
}

const Batch& SamplePath::state(std::size_t i) const {
  if (i == grid.n_steps) return states.back();
  if (i % stride != 0 || i / stride >= states.size()) {
    throw UsageError("state " + std::to_string(i) + " was not stored (stride " + std::to_string(stride) + ")");
  }
  return states[i / stride];
}

void check_finite(const Batch& b, const char* what, std::size_t step) {
  if (!b.allFinite()) throw IntegrationError(std::string("non-finite ") + what, step);
}

Batch drift_from_score(PathKind kind, const Schedule& sched, double s, const Batch& z, const Batch& score) {
  if (kind == PathKind::ode) {
    const auto [a, b] = sched.ode_coefficients(s);
    return a * z + b * score;
  }
  const auto c = sched.sde_coefficients(s);
  return c.drift_z * z + c.drift_score * score;
}

Batch velocity(const ScoreSource& src, const Schedule& sched, double s, const Batch& z) {
  return drift_from_score(PathKind::ode, sched, s, z, src.score_batch(s, z));
}

Batch sde_drift(const ScoreSource& src, const Schedule& sched, double s, const Batch& z) {
  return drift_from_score(PathKind::sde, sched, s, z, src.score_batch(s, z));
}

Batch wiener_increments(std::uint64_t seed, std::size_t step, Eigen::Index row_offset,
                        Eigen::Index rows, Eigen::Index dim, double dt) {
  const NormalStream normals(seed, Substream::path_noise);
  Batch out(rows, dim);
  for (Eigen::Index i = 0; i < rows; ++i) {
    normals.fill(step, static_cast<std::uint64_t>(row_offset + i),
                 std::span<double>(out.row(i).data(), static_cast<std::size_t>(dim)));
  }
  out *= std::sqrt(dt);
  return out;
}

namespace {

void validate(const ScoreSource& src, const Schedule& sched, const Batch& z0, const IntegrationGrid& grid,
              const IntegratorOptions& opts) {
  if (z0.rows() == 0) throw DomainError("empty initial batch");
  if (z0.cols() != src.dim()) throw DomainError("initial batch dimension does not match the score source");
  if (!z0.allFinite()) throw DomainError("initial batch is not finite");
  if (opts.stride == 0) throw DomainError("stride must be >= 1");
  grid.check_within(sched);
}

std::size_t effective_workers(const ScoreSource& src, const IntegratorOptions& opts) {
  return src.concurrent() ? opts.workers : 1;
}

// Integrates rows [offset, offset + z.rows()) of a batch in place. Optional
// sinks receive stored states and noise.
void integrate_block(const ScoreSource& src, const Schedule& sched, Batch& z, Eigen::Index offset,
                     const IntegrationGrid& grid, PathKind kind, std::uint64_t seed,
                     const IntegratorOptions& opts, std::vector<Batch>* states, std::vector<Batch>* noise,
                     const std::vector<Batch>* replay = nullptr) {
  const double dt = grid.dt;
  if (states) states->push_back(z);
  for (std::size_t i = 0; i < grid.n_steps; ++i) {
    const double s = grid.time(i);
    if (kind == PathKind::ode) {
      z += dt * velocity(src, sched, s, z);
    } else {
      const Batch dw = replay ? Batch((*replay)[i].middleRows(offset, z.rows()))
                              : wiener_increments(seed, i, offset, z.rows(), z.cols(), dt);
      const double g = sched.sde_coefficients(s).diffusion * opts.noise_scale;
      z += dt * sde_drift(src, sched, s, z) + g * dw;
      if (noise) noise->push_back(dw);
    }
    check_finite(z, "sample state", i);
    const std::size_t next = i + 1;
    if (states && (next % opts.stride == 0 || next == grid.n_steps)) states->push_back(z);
  }
}

SamplePath sample(const ScoreSource& src, const Schedule& sched, const Batch& z0, const IntegrationGrid& grid,
                  PathKind kind, std::uint64_t seed, const IntegratorOptions& opts,
                  const std::vector<Batch>* replay = nullptr) {
  validate(src, sched, z0, grid, opts);
  if (replay) {
    if (replay->size() != grid.n_steps) throw DomainError("one increment batch per step expected");
    for (const Batch& dw : *replay) {
      if (dw.rows() != z0.rows() || dw.cols() != z0.cols()) throw DomainError("increment batch shape mismatch");
      if (!dw.allFinite()) throw DomainError("increments must be finite");
    }
  }
  SamplePath path;
  path.grid = grid;
  path.kind = kind;
  path.seed = seed;
  path.stride = opts.stride;

  const std::size_t workers = effective_workers(src, opts);
  struct Shard {
    Eigen::Index begin = 0, end = 0;
    std::vector<Batch> states, noise;
  };
  const auto n = static_cast<std::size_t>(z0.rows());
  const std::size_t n_shards = std::clamp<std::size_t>(workers, 1, n);
  std::vector<Shard> shards(n_shards);
  for (std::size_t w = 0; w < n_shards; ++w) {
    shards[w].begin = static_cast<Eigen::Index>(n * w / n_shards);
    shards[w].end = static_cast<Eigen::Index>(n * (w + 1) / n_shards);
  }
  for_each_shard(static_cast<Eigen::Index>(n_shards), n_shards, [&](Eigen::Index lo, Eigen::Index hi) {
    for (Eigen::Index w = lo; w < hi; ++w) {
      Shard& sh = shards[static_cast<std::size_t>(w)];
      Batch z = z0.middleRows(sh.begin, sh.end - sh.begin);
      integrate_block(src, sched, z, sh.begin, grid, kind, seed, opts, &sh.states,
                      kind == PathKind::sde ? &sh.noise : nullptr, replay);
    }
  });

  auto merge = [&](auto member) {
    std::vector<Batch> out;
    const std::size_t count = (shards.front().*member).size();
    out.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
      Batch b(z0.rows(), z0.cols());
      for (const Shard& sh : shards) b.middleRows(sh.begin, sh.end - sh.begin) = (sh.*member)[j];
      out.push_back(std::move(b));
    }
    return out;
  };
  path.states = merge(&Shard::states);
  if (kind == PathKind::sde) path.noise = merge(&Shard::noise);
  return path;
}

}  // namespace

SamplePath sample_ode(const ScoreSource& src, const Schedule& sched, const Batch& z0,
                      const IntegrationGrid& grid, const IntegratorOptions& opts) {
  return sample(src, sched, z0, grid, PathKind::ode, 0, opts);
}

SamplePath sample_sde(const ScoreSource& src, const Schedule& sched, const Batch& z0,
                      const IntegrationGrid& grid, std::uint64_t seed, const IntegratorOptions& opts) {
  return sample(src, sched, z0, grid, PathKind::sde, seed, opts);
}

SamplePath sample_sde_replay(const ScoreSource& src, const Schedule& sched, const Batch& z0,
                             const IntegrationGrid& grid, const std::vector<Batch>& increments,
                             const IntegratorOptions& opts) {
  return sample(src, sched, z0, grid, PathKind::sde, 0, opts, &increments);
}

Batch integrate_terminal(const ScoreSource& src, const Schedule& sched, const Batch& z0,
                         const IntegrationGrid& grid, PathKind kind, std::uint64_t seed,
                         const IntegratorOptions& opts) {
  if (kind == PathKind::sensitivity) throw UsageError("integrate_terminal needs an ode or sde kind");
  validate(src, sched, z0, grid, opts);
  Batch out = z0;
  for_each_shard(z0.rows(), effective_workers(src, opts), [&](Eigen::Index begin, Eigen::Index end) {
    Batch z = z0.middleRows(begin, end - begin);
    integrate_block(src, sched, z, begin, grid, kind, seed, opts, nullptr, nullptr);
    out.middleRows(begin, end - begin) = z;
  });
  return out;
}

}  // namespace diffsens
