#include <doctest.h>

#include <cmath>
#include <string>

#include "diffsens/errors.hpp"
#include "diffsens/score_source.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace diffsens;

namespace {

const Schedule vp = Schedule::vp_default(1e-3);

std::string server(const std::string& extra = "") {
  return (fixtures::bin_dir / "diffsens-score-server").string() + " " +
         fixtures::config("correlate_external_d10.json").string() + extra;
}

}  // namespace

TEST_CASE("analytic source") {
  const AnalyticScoreSource std_normal(DiffusedMeasure(GaussianMixture::single(Vector::Zero(3), 1.0), vp));
  CHECK(std_normal.score(0.4, Vector::Zero(3)).norm() == 0.0);
  CHECK(std_normal.score_jvp(0.4, Vector::Ones(3), Vector::Zero(3)).norm() == 0.0);

  const DiffusedMeasure measure(fixtures::two_modes(10), vp);
  const AnalyticScoreSource src(measure);
  const Batch z = oracle::gaussian_batch(1, 16, 10);
  const Batch u = oracle::gaussian_batch(2, 16, 10);
  const double s = 0.62;
  const Batch scores = src.score_batch(s, z);
  const Batch jvps = src.score_jvp_batch(s, z, u);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    CHECK((scores.row(i).transpose() - measure.score(s, z.row(i).transpose())).norm() <= 1e-12);
  }
  CHECK(src.has_exact_density());
  CHECK((src.log_density_batch(s, z) - measure.at(s).log_density_batch(z)).norm() == 0.0);
  CHECK((src.score_divergence_batch(s, z) - measure.at(s).divergence_of_score_batch(z)).norm() == 0.0);

  SUBCASE("JVP against a finite difference") {
    const Batch fd = fd_score_jvp_batch(src, s, z, u);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      CHECK((jvps.row(i) - fd.row(i)).norm() <= 1e-4 * jvps.row(i).norm());
    }
  }
  SUBCASE("JVP linearity is exact") {
    CHECK(src.score_jvp_batch(s, z, 2.0 * u) == 2.0 * jvps);
  }
  SUBCASE("JVP is a symmetric bilinear form") {
    const Batch w = oracle::gaussian_batch(3, 16, 10);
    const Batch jw = src.score_jvp_batch(s, z, w);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      CHECK(std::abs(u.row(i).dot(jw.row(i)) - w.row(i).dot(jvps.row(i))) < 1e-8);
    }
  }
  SUBCASE("default divergence uses coordinate JVPs") {
    struct Plain final : ScoreSource {
      const ScoreSource& inner;
      explicit Plain(const ScoreSource& i) : inner(i) {}
      Eigen::Index dim() const override { return inner.dim(); }
      Batch score_batch(double t, const Batch& x) const override { return inner.score_batch(t, x); }
    } plain(src);
    const Vector exact = src.score_divergence_batch(s, z);
    const Vector approx = plain.score_divergence_batch(s, z);
    CHECK((exact - approx).cwiseAbs().maxCoeff() <= 1e-4 * exact.cwiseAbs().maxCoeff());
    CHECK_THROWS_AS(plain.log_density_batch(s, z), UsageError);
  }
}

TEST_CASE("finite-difference JVP skips zero directions") {
  struct Counting final : ScoreSource {
    mutable long calls = 0;
    mutable Eigen::Index rows = 0;
    Eigen::Index dim() const override { return 2; }
    Batch score_batch(double, const Batch& x) const override {
      ++calls;
      rows += x.rows();
      return -x;
    }
  } lin;
  Batch z = Batch::Ones(3, 2);
  Batch u = Batch::Zero(3, 2);
  CHECK(fd_score_jvp_batch(lin, 0.5, z, u).norm() == 0.0);
  CHECK(lin.calls == 0);
  u(1, 0) = 1.0;
  const Batch j = fd_score_jvp_batch(lin, 0.5, z, u);
  CHECK(lin.calls == 1);
  CHECK(lin.rows == 2);
  CHECK(j(1, 0) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(j.row(0).norm() == 0.0);
}

TEST_CASE("external source backed by the reference server") {
  ExternalScoreSource ext(server(), 10);
  const AnalyticScoreSource ana(DiffusedMeasure(fixtures::two_modes(10), vp));
  CHECK(ext.dim() == 10);
  CHECK_FALSE(ext.concurrent());
  CHECK_FALSE(ext.has_exact_density());
  const std::size_t after_handshake = ext.requests_sent();
  CHECK(after_handshake == 2);

  const Batch z = oracle::gaussian_batch(4, 32, 10);
  const Batch u = oracle::gaussian_batch(5, 32, 10);
  for (double s : {0.05, 0.5, 0.99}) {
    const Batch a = ana.score_batch(s, z);
    const Batch e = ext.score_batch(s, z);
    CHECK((a - e).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + a.cwiseAbs().maxCoeff()));
    // The payload is round-tripped exactly.
    CHECK(a == e);
    const Batch ja = ana.score_jvp_batch(s, z, u);
    const Batch je = ext.score_jvp_batch(s, z, u);
    for (Eigen::Index i = 0; i < z.rows(); ++i) CHECK((ja.row(i) - je.row(i)).norm() <= 1e-3 * ja.row(i).norm());
    const Batch je2 = ext.score_jvp_batch(s, z, 3.0 * u);
    for (Eigen::Index i = 0; i < z.rows(); ++i) CHECK((je2.row(i) - 3.0 * je.row(i)).norm() <= 1e-3 * je2.row(i).norm());
  }
  const std::size_t before = ext.requests_sent();
  CHECK(ext.score_jvp_batch(0.5, z, Batch::Zero(32, 10)).norm() == 0.0);
  CHECK(ext.requests_sent() == before);
  CHECK_THROWS_AS(ext.score_batch(0.5, Batch::Zero(2, 3)), TransportError);
  CHECK(ext.shutdown() == 0);
  CHECK_THROWS_AS(ext.score_batch(0.5, z), TransportError);
}

TEST_CASE("external source failures") {
  auto raw_reply = [](const std::string& cmd, Eigen::Index dim) {
    try {
      ExternalScoreSource ext(cmd, dim);
    } catch (const TransportError& e) {
      return std::string(e.raw_reply()) + "|" + e.what();
    }
    return std::string("no error");
  };
  CHECK(raw_reply("echo not-json", 10).rfind("not-json|", 0) == 0);
  CHECK(raw_reply("true", 10).find("closed its output") != std::string::npos);
  CHECK(raw_reply("/nonexistent/score-server", 10).find("closed its output") != std::string::npos);
  CHECK(raw_reply(server(" --fault nondeterministic"), 10).find("not deterministic") != std::string::npos);
  CHECK(raw_reply(server(" --fault bad-dim"), 10).find("dimension 11") != std::string::npos);
  CHECK(raw_reply(server(" --fault exit-on-score"), 10).find("exited with status 7") != std::string::npos);
  CHECK(raw_reply(server(" --fault nan"), 10).find("values") != std::string::npos);
  CHECK(raw_reply(server(), 4).find("dimension 10") != std::string::npos);
  CHECK(raw_reply("sleep 30 >/dev/null; echo late", 0) != "no error");
}
