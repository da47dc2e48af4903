#include "diffsens/schedule.hpp"

#include <cmath>
#include <sstream>

#include "diffsens/errors.hpp"

namespace diffsens {

Schedule::Schedule(double beta_min, double beta_max, double t0, double t1, double t1_trunc)
    : beta_min_(beta_min), beta_max_(beta_max), t0_(t0), t1_(t1), t1_trunc_(t1_trunc) {
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !std::isfinite(beta_max)) {
    throw DomainError("schedule requires 0 < beta_min <= beta_max");
  }
  if (!(t0 < t1_trunc) || !(t1_trunc < t1) || !std::isfinite(t0) || !std::isfinite(t1)) {
    std::ostringstream msg;
    msg << "schedule requires t0 < t1_trunc < t1, got t0=" << t0 << " t1_trunc=" << t1_trunc
        << " t1=" << t1;
    throw DomainError(msg.str());
  }
}

Schedule Schedule::vp_default(double dt) {
  return Schedule(kDefaultBetaMin, kDefaultBetaMax, 0.0, 1.0, 1.0 - dt);
}

Schedule Schedule::with_truncation(double t1_trunc) const {
  return Schedule(beta_min_, beta_max_, t0_, t1_, t1_trunc);
}

double Schedule::beta(double tau) const {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw DomainError("beta: diffusion time outside [0, 1]: " + std::to_string(tau));
  }
  return beta_min_ + tau * (beta_max_ - beta_min_);
}

double Schedule::integrated_beta(double tau) const {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw DomainError("integrated_beta: diffusion time outside [0, 1]: " + std::to_string(tau));
  }
  return beta_min_ * tau + 0.5 * (beta_max_ - beta_min_) * tau * tau;
}

void Schedule::check_time(double s) const {
  if (!(s >= t0_ && s <= t1_)) {
    std::ostringstream msg;
    msg << "sampling time " << s << " outside [" << t0_ << ", " << t1_ << "]";
    throw DomainError(msg.str());
  }
}

double Schedule::diffusion_time(double s) const {
  check_time(s);
  return (t1_ - s) / (t1_ - t0_);
}

ScaleNoise Schedule::alpha_sigma(double s) const {
  const double tau = diffusion_time(s);
  const double half_b = 0.5 * integrated_beta(tau);
  // 1 - alpha^2 = -expm1(-B) keeps sigma accurate near the data end.
  return {std::exp(-half_b), std::sqrt(-std::expm1(-2.0 * half_b))};
}

OdeCoefficients Schedule::ode_coefficients(double s) const {
  const double half_beta = 0.5 * beta(diffusion_time(s)) * rate_scale();
  return {half_beta, half_beta};
}

SdeCoefficients Schedule::sde_coefficients(double s) const {
  const double b = beta(diffusion_time(s)) * rate_scale();
  return {0.5 * b, b, std::sqrt(b)};
}

}  // namespace diffsens
