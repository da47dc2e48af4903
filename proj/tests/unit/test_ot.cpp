#include <doctest.h>

#include <cmath>
#include <vector>

#include "diffsens/errors.hpp"
#include "diffsens/ot.hpp"
#include "oracles.hpp"

using namespace diffsens;
using oracle::ld;

namespace {

std::vector<std::vector<ld>> rows_of(const Batch& b) {
  std::vector<std::vector<ld>> out;
  for (Eigen::Index i = 0; i < b.rows(); ++i) out.push_back(oracle::to_ld(Vector(b.row(i).transpose())));
  return out;
}

}  // namespace

TEST_CASE("defaults") {
  CHECK(SinkhornOptions{}.reg == 0.05);
}

TEST_CASE("a single pair gets all the mass") {
  const Coupling c = sinkhorn_log(Batch::Ones(1, 3), Batch::Zero(1, 3));
  CHECK(c.plan(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c.converged);
  CHECK(transport_rays(c, Batch::Ones(1, 3), Batch::Zero(1, 3)).isApprox(-Batch::Ones(1, 3), 1e-14));
}

TEST_CASE("well separated identical clouds pair with themselves") {
  Batch pts(4, 2);
  pts << 0, 0, 3, 0, 0, 3, 3, 3;
  const Coupling c = sinkhorn_log(pts, pts);
  CHECK(c.converged);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(c.plan(i, i) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(transport_rays(c, pts, pts).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("plan and rays against dense scaling") {
  const Batch a = oracle::gaussian_batch(20, 3, 2, 0.3);
  const Batch b = oracle::gaussian_batch(21, 3, 2, 0.3);
  const double reg = 0.05;
  SinkhornOptions opts;
  opts.tol = 1e-14;
  opts.max_iter = 100000;
  const Coupling c = sinkhorn_log(a, b, opts);
  const auto ref = oracle::dense_sinkhorn(rows_of(a), rows_of(b), reg);
  CHECK(c.converged);
  CHECK(c.reg == reg);
  CHECK(c.max_violation <= 1e-14);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) CHECK(std::abs(c.plan(i, j) - static_cast<double>(ref[i][j])) < 1e-8);
  }
  CHECK((c.plan.rowwise().sum() - c.marginal_a).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((c.plan.colwise().sum().transpose() - c.marginal_b).cwiseAbs().maxCoeff() < 1e-12);
  const Batch rays = transport_rays(c, a, b);
  for (int i = 0; i < 3; ++i) {
    ld mass = 0;
    std::vector<ld> bar(2, 0.0L);
    for (int j = 0; j < 3; ++j) {
      mass += ref[i][j];
      for (int k = 0; k < 2; ++k) bar[k] += ref[i][j] * b(j, k);
    }
    for (int k = 0; k < 2; ++k) CHECK(std::abs(rays(i, k) - static_cast<double>(bar[k] / mass - a(i, k))) < 1e-7);
  }
}

TEST_CASE("symmetries") {
  // Dyadic coordinates keep every cost exact under the shift.
  Batch a(5, 2), b(4, 2);
  a << 0, 0, 0.25, 0.5, -0.5, 0.125, 1, -0.25, 0.75, 0.75;
  b << 0.5, 0, -0.25, -0.5, 0.125, 1, 1, 1;
  const Coupling c = sinkhorn_log(a, b);
  const Eigen::RowVector2d shift(4.0, -8.0);
  const Coupling moved = sinkhorn_log(a.rowwise() + shift, b.rowwise() + shift);
  CHECK(moved.plan == c.plan);
  const Coupling swapped = sinkhorn_log(b, a);
  CHECK(swapped.plan == c.plan.transpose());
  CHECK(swapped.iterations_used == c.iterations_used);
  CHECK(squared_distances(a, b)(1, 0) == 0.0625 + 0.25);
}

TEST_CASE("failure reporting") {
  const Batch a = oracle::gaussian_batch(22, 20, 3);
  const Batch b = oracle::gaussian_batch(23, 30, 3);
  SinkhornOptions opts;
  opts.reg = 1e-3;
  opts.max_iter = 3;
  const Coupling c = sinkhorn_log(a, b, opts);
  CHECK_FALSE(c.converged);
  CHECK(c.iterations_used == 3);
  CHECK(c.max_violation > opts.tol);

  Coupling hole = sinkhorn_log(a, b);
  hole.plan.row(4).setZero();
  CHECK_THROWS_AS(transport_rays(hole, a, b), DomainError);
  CHECK_THROWS_AS(sinkhorn_log(a, Batch::Zero(0, 3)), DomainError);
  CHECK_THROWS_AS(sinkhorn_log(a, Batch::Zero(2, 2)), DomainError);
  opts.reg = 0.0;
  CHECK_THROWS_AS(sinkhorn_log(a, b, opts), DomainError);
}

TEST_CASE("standardization") {
  Batch a = oracle::gaussian_batch(24, 50, 3, 4.0);
  Batch b = oracle::gaussian_batch(25, 70, 3, 2.0);
  a.col(2).setConstant(7.0);
  b.col(2).setConstant(7.0);
  standardize_features(a, b);
  Batch pooled(120, 3);
  pooled << a, b;
  const Eigen::RowVectorXd mean = pooled.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-12);
  for (int k = 0; k < 2; ++k) {
    CHECK((pooled.col(k).array() - mean(k)).square().mean() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(pooled.col(2).cwiseAbs().maxCoeff() == 0.0);
}
