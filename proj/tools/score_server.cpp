// Reference external score process: serves the closed-form score of a
// config's rho (or nu) mixture over the line protocol on stdin/stdout.

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <limits>
#include <iostream>
#include <string>

#include "diffsens/config.hpp"
#include "diffsens/errors.hpp"
#include "diffsens/score_source.hpp"
#include "diffsens/wire.hpp"

namespace {

using diffsens::Batch;

// Deliberately broken servers for protocol tests.
class FaultySource final : public diffsens::ScoreSource {
 public:
  FaultySource(const diffsens::ScoreSource& inner, std::string fault) : inner_(inner), fault_(std::move(fault)) {}

  Eigen::Index dim() const override { return inner_.dim() + (fault_ == "bad-dim" ? 1 : 0); }

  Batch score_batch(double s, const Batch& z) const override {
    if (fault_ == "exit-on-score") std::_Exit(7);
    Batch out = inner_.score_batch(s, z);
    if (fault_ == "nondeterministic") out.array() += 1e-9 * static_cast<double>(++calls_);
    if (fault_ == "nan") out(0, 0) = std::numeric_limits<double>::quiet_NaN();
    return out;
  }

 private:
  const diffsens::ScoreSource& inner_;
  std::string fault_;
  mutable std::atomic<long> calls_{0};
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-form mixture score server speaking the line protocol"};
  std::string config;
  std::string measure = "rho";
  std::string fault = "none";
  bool full = false;
  app.add_option("config", config, "Run configuration file")->required()->check(CLI::ExistingFile);
  app.add_option("--measure", measure, "Mixture to serve")->check(CLI::IsMember({"rho", "nu"}));
  app.add_flag("--full", full, "Apply the config's \"full\" overrides");
  app.add_option("--fault", fault, "Misbehave on purpose")
      ->check(CLI::IsMember({"none", "nondeterministic", "bad-dim", "exit-on-score", "nan"}));
  CLI11_PARSE(app, argc, argv);

  try {
    diffsens::ConfigOverrides ov;
    ov.full = full;
    const diffsens::RunConfig cfg = diffsens::load_config(config, ov);
    const diffsens::Schedule sched = cfg.schedule(cfg.dts.front());
    const diffsens::AnalyticScoreSource exact(
        diffsens::DiffusedMeasure(measure == "nu" ? cfg.nu : cfg.rho, sched));
    std::ios::sync_with_stdio(false);
    if (fault == "none") return diffsens::wire::serve(std::cin, std::cout, std::cerr, exact);
    const FaultySource faulty(exact, fault);
    return diffsens::wire::serve(std::cin, std::cout, std::cerr, faulty);
  } catch (const diffsens::Error& e) {
    std::cerr << "diffsens-score-server: " << e.what() << '\n';
    return 2;
  }
}
