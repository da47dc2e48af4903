#pragma once

#include <cstddef>
#include <cstdint>

#include "diffsens/dynamics.hpp"

namespace diffsens {

// How the divergence of the PF-ODE velocity is obtained.
struct DivergenceEstimator {
  enum class Mode { exact, hutchinson };
  Mode mode = Mode::exact;
  std::size_t n_probes = 1;
  std::uint64_t seed = 0;

  static DivergenceEstimator exact() { return {}; }
  static DivergenceEstimator hutchinson(std::size_t n_probes, std::uint64_t seed);
};

// div v(s, z) for each row. Exact mode: d a(s) + b(s) tr(J score). Hutchinson
// mode: mean over probes of eps^T (a eps + b J eps) with standard normal eps
// keyed by (seed, step, probe) and shared by all rows at that step.
Vector divergence(const ScoreSource& src, const Schedule& sched, double s, const Batch& z,
                  const DivergenceEstimator& est, std::size_t step = 0);

// log N(z; 0, I) per row.
Vector standard_normal_log_density(const Batch& z);

// Forward Euler on d log rho / ds = -div v along a stored ODE path.
// Row i of the result holds log-densities at grid point i.
Matrix integrate_log_density(const ScoreSource& src, const Schedule& sched, const SamplePath& path,
                             const DivergenceEstimator& est, const Vector& initial_logp,
                             std::size_t workers = 1);

}  // namespace diffsens
