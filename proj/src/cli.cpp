#include "diffsens/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "diffsens/config.hpp"
#include "diffsens/errors.hpp"
#include "diffsens/experiments.hpp"

namespace diffsens {

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

struct Args {
  std::string config;
  std::vector<double> dts;
  std::vector<double> etas;
  std::string out;
  bool full = false;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
};

fs::path executable_dir(const char* argv0) {
  std::error_code ec;
  const fs::path self = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) return self.parent_path();
  return fs::absolute(argv0).parent_path();
}

void add_run_options(CLI::App* sub, Args& a, bool run) {
  sub->add_option("config", a.config, "Run configuration file")->required()->check(CLI::ExistingFile);
  sub->add_flag("--full", a.full, "Apply the config's \"full\" overrides");
  sub->add_option("--seed", a.seed, "Override sampling.seed");
  sub->add_option("--dt", a.dts, "Step size(s), replaces sampling.dt")->check(CLI::PositiveNumber);
  if (!run) return;
  sub->add_option("--eta", a.etas, "Mixture weight(s), replaces sampling.eta");
  sub->add_option("--out", a.out, "Output directory, replaces output.dir");
  sub->add_option("--workers", a.workers, "Worker threads")->check(CLI::PositiveNumber);
}

int run(const std::string& name, const Args& a, const fs::path& bin_dir) {
  ConfigOverrides ov;
  ov.dts = a.dts;
  ov.etas = a.etas;
  ov.full = a.full;
  ov.workers = a.workers;
  ov.seed = a.seed;
  ov.bin_dir = bin_dir;
  if (!a.out.empty()) ov.output_dir = fs::path(a.out);
  const RunConfig cfg = load_config(a.config, ov);

  if (name == "validate-config") {
    std::cout << "ok " << cfg.hash << " dim=" << cfg.dim() << " batch=" << cfg.batch << " seed=" << cfg.seed
              << '\n';
    return kOk;
  }

  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report = [&] {
    if (name == "remainder-sweep") return run_remainder_sweep(cfg);
    if (name == "hutchinson-sweep") return run_hutchinson_sweep(cfg);
    if (name == "correlate") return run_correlation_experiment(cfg);
    if (name == "sample") return run_sample(cfg, cfg.output_dir);
    if (name == "sensitivity") return run_sensitivity(cfg, cfg.output_dir);
    return run_ot_baseline(cfg);
  }();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.diagnostics()["wall_seconds"] = seconds;
  report.write(cfg.output_dir, cfg);
  std::cerr << name << ": " << report.records().size() << " rows -> " << (cfg.output_dir / "report.csv").string()
            << " (" << seconds << " s)\n";
  return kOk;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Sample sensitivity of diffusion models to target-measure perturbations"};
  app.name("diffsens");
  app.require_subcommand(1);
  app.fallthrough(false);

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"remainder-sweep", "Taylor remainder over samplers, step sizes and mixture weights"},
      {"hutchinson-sweep", "Taylor remainder with change-of-variables densities per probe count"},
      {"correlate", "Per-sample correlation of predicted and actual sample changes"},
      {"sample", "Integrate base sample paths and write path artifacts"},
      {"sensitivity", "Integrate sample sensitivities along stored paths"},
      {"ot-baseline", "Entropic OT coupling and transport rays"},
      {"validate-config", "Parse and validate a run configuration"},
  };
  Args args;
  for (const auto& [name, help] : commands) {
    add_run_options(app.add_subcommand(name, help), args, std::string(name) != "validate-config");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "diffsens: " << e.what() << "\n\n" << app.help();
    return kConfigError;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run(name, args, executable_dir(argv[0]));
  } catch (const ConfigError& e) {
    std::cerr << "diffsens " << name << ": config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const UsageError& e) {
    std::cerr << "diffsens " << name << ": " << e.what() << '\n';
    return kConfigError;
  } catch (const IntegrationError& e) {
    std::cerr << "diffsens " << name << ": numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const DomainError& e) {
    std::cerr << "diffsens " << name << ": numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const TransportError& e) {
    std::cerr << "diffsens " << name << ": score backend failure: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "diffsens " << name << ": " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace diffsens
