#pragma once

namespace diffsens {

struct ScaleNoise {
  double alpha;
  double sigma;
};

// v(s, z) = a z + b score(s, z)
struct OdeCoefficients {
  double a;
  double b;
};

// f(s, z) = drift_z z + drift_score score(s, z), diffusion g(s).
struct SdeCoefficients {
  double drift_z;
  double drift_score;
  double diffusion;
};

// Variance-preserving schedule with a linear noising rate.
//
// Sampling time s runs from t0 (pure noise) to t1 (data). Diffusion time
// tau = (t1 - s) / (t1 - t0) lies in [0, 1] and drives the rate
// beta(tau) = beta_min + tau (beta_max - beta_min). The defaults are the
// continuous limit of a 1000-step linear DDPM scheduler with
// beta in [1e-4, 0.02].
//
// Immutable after construction.
class Schedule {
 public:
  static constexpr double kDefaultBetaMin = 0.1;
  static constexpr double kDefaultBetaMax = 20.0;

  Schedule(double beta_min, double beta_max, double t0, double t1, double t1_trunc);

  // Default rates on [0, 1], truncated one step of size dt short of the data end.
  static Schedule vp_default(double dt);

  Schedule with_truncation(double t1_trunc) const;

  double beta_min() const noexcept { return beta_min_; }
  double beta_max() const noexcept { return beta_max_; }
  double t0() const noexcept { return t0_; }
  double t1() const noexcept { return t1_; }
  double t1_trunc() const noexcept { return t1_trunc_; }

  double beta(double tau) const;
  // Integrated rate B(tau) = int_0^tau beta(u) du.
  double integrated_beta(double tau) const;
  double diffusion_time(double s) const;

  ScaleNoise alpha_sigma(double s) const;

  // Coefficients are defined on all of [t0, t1]; integrators only query
  // them up to t1_trunc.
  OdeCoefficients ode_coefficients(double s) const;
  SdeCoefficients sde_coefficients(double s) const;

 private:
  void check_time(double s) const;
  // d tau / d s magnitude, 1 / (t1 - t0).
  double rate_scale() const noexcept { return 1.0 / (t1_ - t0_); }

  double beta_min_;
  double beta_max_;
  double t0_;
  double t1_;
  double t1_trunc_;
};

}  // namespace diffsens
