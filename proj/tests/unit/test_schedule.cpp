#include <doctest.h>

#include <cmath>

#include "diffsens/errors.hpp"
#include "diffsens/schedule.hpp"
#include "oracles.hpp"

using namespace diffsens;

namespace {
const Schedule vp = Schedule::vp_default(1e-3);
}

TEST_CASE("beta is linear in diffusion time") {
  CHECK(vp.beta(0.0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(vp.beta(1.0) == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(vp.beta(0.5) == doctest::Approx(10.05).epsilon(1e-15));
  CHECK_THROWS_AS(vp.beta(-1e-9), DomainError);
  CHECK_THROWS_AS(vp.beta(1.0 + 1e-9), DomainError);
}

TEST_CASE("scale and noise at the endpoints") {
  const ScaleNoise data = vp.alpha_sigma(1.0);
  CHECK(data.alpha == 1.0);
  CHECK(data.sigma == 0.0);
  const ScaleNoise noise = vp.alpha_sigma(0.0);
  CHECK(noise.alpha == doctest::Approx(std::exp(-5.025)).epsilon(1e-14));
  CHECK(noise.sigma == doctest::Approx(std::sqrt(1.0 - std::exp(-10.05))).epsilon(1e-14));
  CHECK_THROWS_AS(vp.alpha_sigma(-0.01), DomainError);
  CHECK_THROWS_AS(vp.alpha_sigma(1.01), DomainError);
}

TEST_CASE("closed form agrees with an independent long double evaluation") {
  for (int i = 0; i <= 100; ++i) {
    const double s = i / 100.0;
    const ScaleNoise an = vp.alpha_sigma(s);
    CHECK(an.alpha == doctest::Approx(static_cast<double>(oracle::alpha(s))).epsilon(1e-14));
    CHECK(an.sigma * an.sigma == doctest::Approx(static_cast<double>(oracle::sigma2(s))).epsilon(1e-13));
  }
}

TEST_CASE("variance-preserving identity and monotonicity") {
  double prev_alpha = -1.0, prev_sigma = 2.0;
  for (int i = 0; i < 1000; ++i) {
    const double s = i / 999.0;
    const ScaleNoise an = vp.alpha_sigma(s);
    CHECK(std::abs(an.alpha * an.alpha + an.sigma * an.sigma - 1.0) < 1e-12);
    CHECK(an.alpha > prev_alpha);
    CHECK(an.sigma < prev_sigma);
    prev_alpha = an.alpha;
    prev_sigma = an.sigma;
  }
}

TEST_CASE("discrete 1000-step linear scheduler") {
  // Betas of the discrete scheduler: linspace(1e-4, 0.02, 1000).
  long double sum = 0, sum_sq = 0, log_prod = 0;
  for (int i = 0; i < 1000; ++i) {
    const long double b = 1e-4L + (0.02L - 1e-4L) * i / 999.0L;
    sum += b;
    sum_sq += b * b;
    log_prod += 0.5L * std::log1p(-b);
  }
  // The continuous rate integrates to the same total as the discrete betas.
  CHECK(static_cast<double>(sum) == doctest::Approx(vp.integrated_beta(1.0)).epsilon(1e-12));
  // The remaining gap between prod sqrt(1 - beta_i) and alpha(t0) is the
  // second-order term of log(1 - b) = -b - b^2 / 2 - ..., about 3.4 %.
  const double alpha0 = vp.alpha_sigma(0.0).alpha;
  const double discrete = static_cast<double>(std::exp(log_prod));
  const double predicted = alpha0 * static_cast<double>(std::exp(-0.25L * sum_sq));
  CHECK(discrete == doctest::Approx(predicted).epsilon(1e-3));
  CHECK(std::abs(discrete / alpha0 - 1.0) < 0.05);
}

TEST_CASE("ODE and SDE coefficients") {
  const OdeCoefficients start = vp.ode_coefficients(0.0);
  CHECK(start.a == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(start.b == doctest::Approx(10.0).epsilon(1e-15));
  const OdeCoefficients end = vp.ode_coefficients(1.0);
  CHECK(end.a == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(end.b == doctest::Approx(0.05).epsilon(1e-15));
  const SdeCoefficients sde = vp.sde_coefficients(0.0);
  CHECK(sde.drift_z == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(sde.drift_score == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(sde.diffusion == doctest::Approx(std::sqrt(20.0)).epsilon(1e-15));
  for (int i = 0; i <= 50; ++i) {
    const double s = i / 50.0;
    const OdeCoefficients o = vp.ode_coefficients(s);
    const SdeCoefficients d = vp.sde_coefficients(s);
    CHECK(o.a == o.b);
    CHECK(d.drift_score == doctest::Approx(2.0 * o.b).epsilon(1e-15));
    CHECK(d.diffusion * d.diffusion == doctest::Approx(d.drift_score).epsilon(1e-14));
  }
}

TEST_CASE("a longer sampling interval rescales the rates") {
  const Schedule wide(0.1, 20.0, 0.0, 2.0, 1.9);
  CHECK(wide.alpha_sigma(1.0).alpha == doctest::Approx(vp.alpha_sigma(0.5).alpha).epsilon(1e-15));
  CHECK(wide.ode_coefficients(1.0).a == doctest::Approx(0.5 * vp.ode_coefficients(0.5).a).epsilon(1e-15));
}

TEST_CASE("invalid schedules are rejected") {
  CHECK_THROWS_AS(Schedule(0.0, 20.0, 0.0, 1.0, 0.9), DomainError);
  CHECK_THROWS_AS(Schedule(5.0, 1.0, 0.0, 1.0, 0.9), DomainError);
  CHECK_THROWS_AS(Schedule(0.1, 20.0, 0.0, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(Schedule(0.1, 20.0, 0.0, 1.0, 0.0), DomainError);
  CHECK_THROWS_AS(Schedule(0.1, 20.0, 1.0, 0.0, 0.5), DomainError);
  CHECK(Schedule::vp_default(5e-3).t1_trunc() == doctest::Approx(0.995).epsilon(1e-15));
  CHECK(vp.with_truncation(0.9).t1_trunc() == 0.9);
}
