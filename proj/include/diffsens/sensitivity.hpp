#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "diffsens/dynamics.hpp"
#include "diffsens/likelihood.hpp"
#include "diffsens/mixture.hpp"

namespace diffsens {

// Bounds on the density ratio nu_t / rho_t.
struct RatioClamp {
  double lo = 0.1;
  double hi = 10.0;
};

// Direction of an additive perturbation rho -> (1 - eta) rho + eta nu.
// sign = -1 turns it into a removal (the caller builds nu as the restriction
// of rho to the removed region).
struct PerturbationSpec {
  GaussianMixture nu;
  int sign = +1;
  std::optional<RatioClamp> ratio_clamp;

  void validate() const;
};

// Score sensitivity at one point:
//   sign * (nu_t / rho_t) * (score_nu - score_rho)
// with the ratio formed in log space and clamped before exponentiation.
Vector score_sensitivity(double rho_logp, const Vector& rho_score, double nu_logp, const Vector& nu_score,
                         const PerturbationSpec& spec);

// Ratio multiplier exp(log_ratio) after clamping; exactly lo or hi when a
// bound is active.
double clamped_ratio(double log_ratio, const std::optional<RatioClamp>& clamp, bool* clamped = nullptr);

// d/d eta of the sampler drift: b(s) g on ODE paths, drift_score(s) g on SDE paths.
Vector velocity_sensitivity(const Schedule& sched, double s, const Vector& g, PathKind kind = PathKind::ode);

struct StepDiagnostics {
  double max_abs_log_ratio = 0.0;
  double clamp_fraction = 0.0;
};

struct SensitivityPath {
  IntegrationGrid grid;
  PathKind base_kind = PathKind::ode;
  // psi[i] is the sensitivity at grid point i; psi[0] = 0.
  std::vector<Batch> psi;
  std::vector<StepDiagnostics> diagnostics;

  const Batch& terminal() const { return psi.back(); }
};

// Forward Euler on the sensitivity equation along a stored path:
//   psi_{i+1} = psi_i + dt [c(s_i) g_i + a(s_i) psi_i + c(s_i) J_score psi_i]
// where (a, c) are the ODE or SDE drift coefficients matching the path kind.
// rho-side log-densities come from `rho_logp` ((n_steps + 1) x B, e.g. from
// integrate_log_density) or, when null, from the source's exact density.
SensitivityPath integrate_sample_sensitivity(const ScoreSource& src, const Schedule& sched,
                                             const SamplePath& path, const PerturbationSpec& spec,
                                             const Matrix* rho_logp = nullptr, std::size_t workers = 1);

// base + eta psi
Batch first_order_samples(const Batch& base_terminal, const Batch& psi_terminal, double eta);

struct Remainder {
  Vector norm;    // |R| per row
  Vector scaled;  // |R| / eta per row
};

// R = (perturbed - base) - eta psi, row-wise Euclidean norms.
Remainder taylor_remainder(const Batch& perturbed_terminal, const Batch& base_terminal,
                           const Batch& psi_terminal, double eta);

// Single-pass flow + log-density + sensitivity, storing nothing but the
// current state. Used for long sweeps where full paths do not fit in memory.
struct PropagationOptions {
  enum class Density { exact, ccov };
  Density density = Density::exact;
  // Divergence estimator for Density::ccov.
  DivergenceEstimator estimator;
  // Starting log-densities for Density::ccov; standard normal when empty.
  std::optional<Vector> initial_logp;
  std::size_t workers = 1;
};

struct Propagation {
  Batch terminal;
  Batch psi;
  Vector logp;  // rho-side log-density at the terminal state
  StepDiagnostics diagnostics;  // worst case over all steps
};

Propagation propagate_sensitivity(const ScoreSource& src, const Schedule& sched, const Batch& z0,
                                  const IntegrationGrid& grid, PathKind kind, std::uint64_t seed,
                                  const PerturbationSpec& spec, const PropagationOptions& opts = {});

}  // namespace diffsens
