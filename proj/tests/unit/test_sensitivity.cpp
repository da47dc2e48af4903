#include <doctest.h>

#include <cmath>
#include <vector>

#include "diffsens/errors.hpp"
#include "diffsens/sensitivity.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace diffsens;
using oracle::ld;

namespace {

oracle::Mixture to_oracle(const GaussianMixture& m) {
  oracle::Mixture out;
  for (Eigen::Index k = 0; k < m.weights().size(); ++k) {
    out.parts.push_back({m.weights()(k), oracle::to_ld(Vector(m.means().row(k).transpose())), m.variances()(k)});
  }
  return out;
}

PerturbationSpec toward(GaussianMixture nu, int sign = +1) {
  PerturbationSpec spec{std::move(nu)};
  spec.sign = sign;
  return spec;
}

}  // namespace

TEST_CASE("pointwise score sensitivity") {
  const Vector score = Vector::LinSpaced(3, -1.0, 2.0);
  CHECK(score_sensitivity(-4.2, score, -4.2, score, toward(fixtures::upper_mode(3))).norm() == 0.0);

  bool clamped = false;
  CHECK(clamped_ratio(5.0, RatioClamp{}, &clamped) == 10.0);
  CHECK(clamped);
  CHECK(clamped_ratio(-5.0, RatioClamp{}, &clamped) == 0.1);
  CHECK(clamped);
  CHECK(clamped_ratio(0.5, RatioClamp{}, &clamped) == std::exp(0.5));
  CHECK_FALSE(clamped);
  CHECK(clamped_ratio(50.0, std::nullopt, &clamped) == std::exp(50.0));
  CHECK_FALSE(clamped);

  PerturbationSpec spec = toward(fixtures::upper_mode(3));
  spec.ratio_clamp = RatioClamp{};
  const Vector nu_score = Vector::Ones(3);
  CHECK(score_sensitivity(0.0, score, 7.0, nu_score, spec) == 10.0 * (nu_score - score));

  spec.sign = 2;
  CHECK_THROWS_AS(spec.validate(), DomainError);
  spec.sign = 1;
  spec.ratio_clamp = RatioClamp{2.0, 1.0};
  CHECK_THROWS_AS(spec.validate(), DomainError);
  CHECK_THROWS_AS(score_sensitivity(NAN, score, 0.0, nu_score, toward(fixtures::upper_mode(3))), DomainError);
}

TEST_CASE("score sensitivity is the eta-derivative of the mixture score") {
  // rho = N(0, I) in the plane, nu a point mass at (1, 0).
  const Schedule sched = Schedule::vp_default(1e-3);
  const GaussianMixture rho = GaussianMixture::single(Vector::Zero(2), 1.0);
  Vector at(2);
  at << 1.0, 0.0;
  const GaussianMixture nu = GaussianMixture::single(at, 1e-300);
  const double s = 0.5;
  const oracle::Mixture rho_t = to_oracle(rho).at(s), nu_t = to_oracle(nu).at(s);
  const GaussianMixture rho_lib = DiffusedMeasure(rho, sched).at(s), nu_lib = DiffusedMeasure(nu, sched).at(s);
  const ld h = 1e-6L;
  for (const Vector& z : {Vector(Vector::Zero(2)), Vector(oracle::gaussian_batch(14, 1, 2).row(0).transpose()),
                          Vector(Vector::Constant(2, 1.5))}) {
    const auto zl = oracle::to_ld(z);
    const auto up = rho_t.combine(1.0L - h, nu_t, h).score(zl);
    const auto down = rho_t.combine(1.0L + h, nu_t, -h).score(zl);
    const Vector g = score_sensitivity(rho_lib.log_density(z), rho_lib.score(z), nu_lib.log_density(z),
                                       nu_lib.score(z), toward(nu));
    for (int j = 0; j < 2; ++j) {
      const double fd = static_cast<double>((up[j] - down[j]) / (2.0L * h));
      CHECK(g(j) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("swap identity and velocity sensitivity") {
  const Schedule sched = Schedule::vp_default(1e-3);
  const DiffusedMeasure rho(fixtures::two_modes(3), sched), nu(fixtures::upper_mode(3), sched);
  const Batch z = oracle::gaussian_batch(15, 8, 3, 0.7);
  const double s = 0.8;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Vector zi = z.row(i).transpose();
    const double lr = rho.log_density(s, zi), ln = nu.log_density(s, zi);
    const Vector fwd = score_sensitivity(lr, rho.score(s, zi), ln, nu.score(s, zi), toward(nu.base()));
    const Vector back = score_sensitivity(ln, nu.score(s, zi), lr, rho.score(s, zi), toward(rho.base()));
    // (nu / rho) (s_nu - s_rho) = -(nu / rho)^2 (rho / nu) (s_rho - s_nu)
    const Vector expect = -std::exp(2.0 * (ln - lr)) * back;
    CHECK((fwd - expect).norm() <= 1e-10 * (1.0 + fwd.norm()));
  }
  const Vector g = Vector::LinSpaced(3, 1.0, 3.0);
  CHECK(velocity_sensitivity(sched, 0.0, g) == 10.0 * g);
  CHECK(velocity_sensitivity(sched, 0.4, g, PathKind::sde) == 2.0 * velocity_sensitivity(sched, 0.4, g));
}

TEST_CASE("sensitivity along paths") {
  const double dt = 2e-3;
  const Schedule sched = Schedule::vp_default(dt);
  const Eigen::Index d = 2;
  const DiffusedMeasure rho(fixtures::two_modes(d), sched);
  const AnalyticScoreSource src(rho);
  const Batch z0 = oracle::gaussian_batch(16, 64, d);
  const IntegrationGrid grid = IntegrationGrid::full(sched, dt);
  const SamplePath ode = sample_ode(src, sched, z0, grid);
  const SamplePath sde = sample_sde(src, sched, z0, grid, 5);

  SUBCASE("nu equal to rho gives zero") {
    for (const SamplePath* p : {&ode, &sde}) {
      const SensitivityPath sp = integrate_sample_sensitivity(src, sched, *p, toward(fixtures::two_modes(d)));
      CHECK(sp.psi.size() == grid.n_steps + 1);
      CHECK(sp.psi.front().norm() == 0.0);
      CHECK(sp.terminal().norm() == 0.0);
    }
  }
  SUBCASE("sign flips psi exactly") {
    const auto plus = integrate_sample_sensitivity(src, sched, ode, toward(fixtures::upper_mode(d)));
    const auto minus = integrate_sample_sensitivity(src, sched, ode, toward(fixtures::upper_mode(d), -1));
    CHECK(minus.terminal() == -plus.terminal());
  }
  SUBCASE("psi points where the perturbed flow moves") {
    const double eta = 1e-3;
    const AnalyticScoreSource moved(DiffusedMeasure(rho.base().blend(fixtures::upper_mode(d), eta), sched));
    for (const SamplePath* p : {&ode, &sde}) {
      const Batch shift = (p->kind == PathKind::ode ? sample_ode(moved, sched, z0, grid)
                                                    : sample_sde(moved, sched, z0, grid, 5))
                              .terminal() -
                          p->terminal();
      const Batch psi = integrate_sample_sensitivity(src, sched, *p, toward(fixtures::upper_mode(d))).terminal();
      int moving = 0, agree = 0;
      for (Eigen::Index i = 0; i < shift.rows(); ++i) {
        if (shift.row(i).norm() < 1e-8) continue;
        ++moving;
        if (shift.row(i).dot(psi.row(i)) > 0.0) ++agree;
      }
      REQUIRE(moving > 0);
      CHECK(agree >= 0.95 * moving);
    }
  }
  SUBCASE("workers do not change the result") {
    const auto a = integrate_sample_sensitivity(src, sched, sde, toward(fixtures::upper_mode(d)));
    const auto b = integrate_sample_sensitivity(src, sched, sde, toward(fixtures::upper_mode(d)), nullptr, 3);
    CHECK(a.terminal() == b.terminal());
    for (std::size_t i = 0; i < a.diagnostics.size(); ++i) {
      REQUIRE(a.diagnostics[i].max_abs_log_ratio == b.diagnostics[i].max_abs_log_ratio);
    }
  }
  SUBCASE("clamp diagnostics") {
    PerturbationSpec spec = toward(fixtures::upper_mode(d));
    spec.ratio_clamp = RatioClamp{};
    const auto sp = integrate_sample_sensitivity(src, sched, ode, spec);
    double worst = 0.0, frac = 0.0;
    for (const auto& diag : sp.diagnostics) {
      worst = std::max(worst, diag.max_abs_log_ratio);
      frac = std::max(frac, diag.clamp_fraction);
    }
    CHECK(worst > std::log(10.0));
    CHECK(frac > 0.0);
    CHECK(frac <= 1.0);
  }
  SUBCASE("fused propagation matches the stored-path route") {
    for (PathKind kind : {PathKind::ode, PathKind::sde}) {
      const SamplePath& p = kind == PathKind::ode ? ode : sde;
      const Propagation fused = propagate_sensitivity(src, sched, z0, grid, kind, 5, toward(fixtures::upper_mode(d)));
      CHECK(fused.terminal == p.terminal());
      CHECK(fused.psi == integrate_sample_sensitivity(src, sched, p, toward(fixtures::upper_mode(d))).terminal());
      CHECK(fused.logp == rho.at(sched.t1_trunc()).log_density_batch(p.terminal()));
    }
    PropagationOptions ccov;
    ccov.density = PropagationOptions::Density::ccov;
    ccov.initial_logp = rho.at(0.0).log_density_batch(z0);
    ccov.workers = 2;
    const Propagation fused = propagate_sensitivity(src, sched, z0, grid, PathKind::ode, 5,
                                                    toward(fixtures::upper_mode(d)), ccov);
    const Matrix lp = integrate_log_density(src, sched, ode, DivergenceEstimator::exact(), *ccov.initial_logp);
    CHECK(fused.logp == lp.bottomRows(1).transpose());
    CHECK(fused.psi ==
          integrate_sample_sensitivity(src, sched, ode, toward(fixtures::upper_mode(d)), &lp).terminal());
    CHECK_THROWS_AS(propagate_sensitivity(src, sched, z0, grid, PathKind::sde, 5, toward(fixtures::upper_mode(d)), ccov),
                    UsageError);
  }
  SUBCASE("misuse") {
    struct Bare final : ScoreSource {
      Eigen::Index dim() const override { return 2; }
      Batch score_batch(double, const Batch& z) const override { return -z; }
    } bare;
    CHECK_THROWS_AS(integrate_sample_sensitivity(bare, sched, ode, toward(fixtures::upper_mode(d))), UsageError);
    CHECK_THROWS_AS(integrate_sample_sensitivity(src, sched, ode, toward(fixtures::upper_mode(3))), DomainError);
    const SamplePath strided = sample_ode(src, sched, z0, grid, {.stride = 3});
    CHECK_THROWS_AS(integrate_sample_sensitivity(src, sched, strided, toward(fixtures::upper_mode(d))), UsageError);
    const Matrix wrong = Matrix::Zero(3, 3);
    CHECK_THROWS_AS(integrate_sample_sensitivity(src, sched, ode, toward(fixtures::upper_mode(d)), &wrong), DomainError);
    CHECK_THROWS_AS(propagate_sensitivity(bare, sched, z0, grid, PathKind::ode, 5, toward(fixtures::upper_mode(d))),
                    UsageError);
  }
}

TEST_CASE("a point mass on the right pulls samples to the right") {
  const double dt = 1e-3;
  const Schedule sched = Schedule::vp_default(dt);
  Vector left(2), right(2);
  left << -2.0, 0.0;
  right << 2.0, 0.0;
  const AnalyticScoreSource src(DiffusedMeasure(GaussianMixture::single(left, 0.25), sched));
  const PerturbationSpec spec = toward(GaussianMixture::single(right, 1e-300));
  const Batch z0 = oracle::gaussian_batch(17, 200, 2);
  const IntegrationGrid grid = IntegrationGrid::full(sched, dt);
  for (PathKind kind : {PathKind::ode, PathKind::sde}) {
    const Batch psi = propagate_sensitivity(src, sched, z0, grid, kind, 9, spec).psi;
    const auto right_moving = (psi.col(0).array() > 0.0).count();
    CAPTURE(to_string(kind));
    CHECK(right_moving >= 0.95 * psi.rows());
  }
}

TEST_CASE("psi is linear in the forcing") {
  const double dt = 1e-2;
  const Schedule sched = Schedule::vp_default(dt);
  const AnalyticScoreSource src(DiffusedMeasure(fixtures::two_modes(2), sched));
  const SamplePath ode = sample_ode(src, sched, oracle::gaussian_batch(18, 16, 2), IntegrationGrid::full(sched, dt));
  // Scaling the density ratio by 4 scales g, hence psi, by 4.
  const Matrix logp = integrate_log_density(src, sched, ode, DivergenceEstimator::exact(),
                                            DiffusedMeasure(fixtures::two_modes(2), sched).at(0.0).log_density_batch(
                                                ode.states.front()));
  const Matrix shifted = (logp.array() - std::log(4.0)).matrix();
  const Batch once = integrate_sample_sensitivity(src, sched, ode, toward(fixtures::upper_mode(2)), &logp).terminal();
  const Batch four = integrate_sample_sensitivity(src, sched, ode, toward(fixtures::upper_mode(2)), &shifted).terminal();
  CHECK((four - 4.0 * once).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + four.cwiseAbs().maxCoeff()));
}

TEST_CASE("first order samples and remainders") {
  Batch base(2, 2), psi(2, 2), moved(2, 2);
  base << 0, 0, 1, 1;
  psi << 1, 0, 0, 2;
  moved << 0.5, 0.0, 1.0, 2.5;
  Batch linear(2, 2);
  linear << 0.5, 0.0, 1.0, 2.0;
  CHECK(first_order_samples(base, psi, 0.5) == linear);
  const Remainder r = taylor_remainder(moved, base, psi, 0.5);
  CHECK(r.norm(0) == 0.0);
  CHECK(r.norm(1) == doctest::Approx(0.5));
  CHECK(r.scaled(1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(taylor_remainder(moved, base, psi, 0.0), DomainError);
  CHECK_THROWS_AS(first_order_samples(base, psi, 1.5), DomainError);
  CHECK_THROWS_AS(first_order_samples(base, Batch::Zero(1, 2), 0.5), DomainError);
}
