#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffsens/dynamics.hpp"
#include "diffsens/likelihood.hpp"
#include "diffsens/mixture.hpp"
#include "diffsens/ot.hpp"
#include "diffsens/schedule.hpp"
#include "diffsens/sensitivity.hpp"
#include "diffsens/stats.hpp"

namespace diffsens {

// A score backend as declared in a run config.
struct BackendConfig {
  enum class Kind { analytic, external };
  Kind kind = Kind::analytic;
  // Shell command line for Kind::external, placeholders already expanded.
  std::string command;
  // How rho-side densities are obtained: exact closed form (analytic only)
  // or the change-of-variables integral with this estimator.
  bool exact_density = true;
  DivergenceEstimator estimator;
  std::optional<RatioClamp> ratio_clamp;
};

struct OtConfig {
  enum class Target { perturbed, nu };
  SinkhornOptions sinkhorn;
  Target target = Target::perturbed;
  Eigen::Index n_targets = 0;  // 0: same as the batch
  bool standardize = false;
};

struct CorrelationConfig {
  enum class Mode { retrain, backend };
  Mode mode = Mode::retrain;
  double eta = 0.1;
  stats::Correlation statistic = stats::Correlation::pearson;
  BackendConfig candidate;
  OtConfig ot;
};

// Parsed and validated run configuration. Everything needed to reproduce a
// report is in here; `canonical` is the resolved document the hash is
// computed from.
struct RunConfig {
  double beta_min = Schedule::kDefaultBetaMin;
  double beta_max = Schedule::kDefaultBetaMax;
  double t0 = 0.0;
  double t1 = 1.0;
  std::optional<double> t1_trunc;  // empty: t1 - dt

  GaussianMixture rho = GaussianMixture::single(Vector::Zero(1), 1.0);
  GaussianMixture nu = GaussianMixture::single(Vector::Zero(1), 1.0);
  int sign = +1;

  std::vector<PathKind> samplers{PathKind::ode, PathKind::sde};
  std::vector<double> dts;
  std::vector<double> etas;
  Eigen::Index batch = 256;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::vector<std::size_t> probe_sweep{1, 10, 100};
  BackendConfig backend;
  CorrelationConfig correlation;

  std::filesystem::path output_dir;
  nlohmann::json canonical;
  std::string hash;

  Eigen::Index dim() const { return rho.dim(); }
  Schedule schedule(double dt) const;
  PerturbationSpec perturbation(const BackendConfig& backend) const;
};

struct ConfigOverrides {
  std::vector<double> dts;
  std::vector<double> etas;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  bool full = false;
  // Directory substituted for ${BIN_DIR} in backend commands.
  std::filesystem::path bin_dir;
};

// Reads a JSON document (// and /* */ comments allowed). Relative paths in
// the file resolve against its directory. Throws ConfigError.
RunConfig load_config(const std::filesystem::path& file, const ConfigOverrides& overrides = {});
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                       const ConfigOverrides& overrides = {});

// Mixture block: {"dim", "weights", "means" | "means_file", "variances" |
// "variance", "empirical"}.
GaussianMixture parse_mixture(const nlohmann::json& block, const std::filesystem::path& base_dir);
// Whitespace- or comma-delimited numbers, one point per row.
Batch read_points(const std::filesystem::path& file);

// 64-bit FNV-1a of the text, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace diffsens
