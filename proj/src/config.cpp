#include "diffsens/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "diffsens/errors.hpp"

namespace diffsens {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) fail(where, "expected a table");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) fail(where, "unknown key '" + key + "'");
  }
}

const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  auto it = doc.find(key);
  return it == doc.end() || it->is_null() ? empty : *it;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(where, "expected a finite number");
  return x;
}

double number_or(const json& obj, const char* key, double fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  return number(*it, where + "." + key);
}

std::uint64_t unsigned_or(const json& obj, const char* key, std::uint64_t fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) fail(where + "." + key, "expected a non-negative integer");
  return it->get<std::uint64_t>();
}

std::string string_or(const json& obj, const char* key, const std::string& fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_string()) fail(where + "." + key, "expected a string");
  return it->get<std::string>();
}

std::vector<double> number_list(const json& v, const std::string& where) {
  std::vector<double> out;
  if (v.is_number()) {
    out.push_back(number(v, where));
  } else if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], where + "[" + std::to_string(i) + "]"));
  } else {
    fail(where, "expected a number or a list of numbers");
  }
  return out;
}

fs::path resolve(const fs::path& p, const fs::path& base_dir) {
  return p.is_absolute() ? p : base_dir / p;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

BackendConfig parse_backend(const json& block, const std::string& where, std::uint64_t seed,
                            const fs::path& base_dir, const fs::path& bin_dir) {
  allow_keys(block, where, {"kind", "command", "density", "n_probes", "ratio_clamp"});
  BackendConfig b;
  const std::string kind = string_or(block, "kind", "analytic", where);
  if (kind == "analytic") {
    b.kind = BackendConfig::Kind::analytic;
  } else if (kind == "external") {
    b.kind = BackendConfig::Kind::external;
    b.command = string_or(block, "command", "", where);
    if (b.command.empty()) fail(where + ".command", "required for an external backend");
    b.command = replace_all(b.command, "${CONFIG_DIR}", base_dir.string());
    b.command = replace_all(b.command, "${BIN_DIR}", bin_dir.string());
  } else {
    fail(where + ".kind", "expected 'analytic' or 'external', got '" + kind + "'");
  }

  const bool analytic = b.kind == BackendConfig::Kind::analytic;
  const std::string density = string_or(block, "density", analytic ? "exact" : "hutchinson", where);
  const auto n_probes = unsigned_or(block, "n_probes", 1, where);
  if (density == "exact") {
    if (!analytic) fail(where + ".density", "an external backend has no closed-form density");
    b.exact_density = true;
  } else if (density == "hutchinson") {
    if (n_probes == 0) fail(where + ".n_probes", "must be at least 1");
    b.exact_density = false;
    b.estimator = DivergenceEstimator::hutchinson(n_probes, seed);
  } else if (density == "trace") {
    b.exact_density = false;
    b.estimator = DivergenceEstimator::exact();
  } else {
    fail(where + ".density", "expected 'exact', 'hutchinson' or 'trace'");
  }

  auto clamp = block.find("ratio_clamp");
  if (clamp == block.end() || (clamp->is_string() && clamp->get<std::string>() == "auto")) {
    if (!analytic) b.ratio_clamp = RatioClamp{};
  } else if (clamp->is_null() || (clamp->is_boolean() && !clamp->get<bool>())) {
    b.ratio_clamp.reset();
  } else if (clamp->is_array() && clamp->size() == 2) {
    RatioClamp c{number((*clamp)[0], where + ".ratio_clamp[0]"), number((*clamp)[1], where + ".ratio_clamp[1]")};
    if (!(c.lo > 0.0 && c.lo <= c.hi)) fail(where + ".ratio_clamp", "need 0 < lo <= hi");
    b.ratio_clamp = c;
  } else {
    fail(where + ".ratio_clamp", "expected \"auto\", null or [lo, hi]");
  }
  return b;
}

PathKind parse_sampler(const json& v, const std::string& where) {
  if (v == "ode") return PathKind::ode;
  if (v == "sde") return PathKind::sde;
  fail(where, "expected 'ode' or 'sde'");
}

// Pins external inputs into the canonical document so the hash covers them.
void pin_files(json& block) {
  if (block.is_object() && block.contains("means_file") && block.contains("__resolved")) {
    block["means_file_fnv1a"] = fnv1a_hex(slurp(block["__resolved"].get<std::string>()));
  }
  if (block.is_object()) block.erase("__resolved");
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Batch read_points(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open points file " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& c : line) {
      if (c == ',') c = ' ';
    }
    std::istringstream fields(line);
    std::vector<double> row;
    std::string tok;
    while (fields >> tok) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(x)) {
        throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": not a number '" + tok + "'");
      }
      row.push_back(x);
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(rows.front().size()) + " columns");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(file.string() + ": no points");
  Batch out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return out;
}

GaussianMixture parse_mixture(const json& block, const fs::path& base_dir) {
  const std::string where = "mixture";
  allow_keys(block, where, {"dim", "weights", "means", "means_file", "variances", "variance", "empirical",
                            "__resolved"});
  const bool empirical = block.value("empirical", false);
  const bool has_inline = block.contains("means");
  const bool has_file = block.contains("means_file");
  if (has_inline == has_file) fail(where, "give exactly one of 'means' and 'means_file'");

  Eigen::Index dim = 0;
  if (block.contains("dim")) {
    dim = static_cast<Eigen::Index>(unsigned_or(block, "dim", 0, where));
    if (dim < 1) fail(where + ".dim", "must be at least 1");
  }

  Batch means;
  if (has_file) {
    means = read_points(resolve(block["means_file"].get<std::string>(), base_dir));
    if (dim != 0 && means.cols() != dim) fail(where + ".means_file", "column count differs from dim");
  } else {
    const json& m = block["means"];
    if (!m.is_array() || m.empty()) fail(where + ".means", "expected a non-empty list");
    for (const auto& entry : m) {
      if (entry.is_array()) {
        const auto n = static_cast<Eigen::Index>(entry.size());
        if (dim == 0) dim = n;
        if (n != dim) fail(where + ".means", "rows of differing length");
      }
    }
    if (dim == 0) fail(where + ".dim", "required when every mean is a scalar");
    means.resize(static_cast<Eigen::Index>(m.size()), dim);
    for (std::size_t k = 0; k < m.size(); ++k) {
      const auto row = static_cast<Eigen::Index>(k);
      if (m[k].is_array()) {
        for (Eigen::Index j = 0; j < dim; ++j) means(row, j) = number(m[k][static_cast<std::size_t>(j)], where + ".means");
      } else {
        means.row(row).setConstant(number(m[k], where + ".means"));
      }
    }
  }
  const auto n = means.rows();

  Vector weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
  if (block.contains("weights")) {
    if (empirical) fail(where + ".weights", "empirical measures are uniformly weighted");
    const auto w = number_list(block["weights"], where + ".weights");
    if (static_cast<Eigen::Index>(w.size()) != n) fail(where + ".weights", "one weight per mean expected");
    weights = Eigen::Map<const Vector>(w.data(), n);
  }

  Vector variances = Vector::Zero(n);
  if (block.contains("variances") && block.contains("variance")) {
    fail(where, "give at most one of 'variance' and 'variances'");
  }
  if (block.contains("variances")) {
    const auto v = number_list(block["variances"], where + ".variances");
    if (v.size() == 1) {
      variances.setConstant(v.front());
    } else if (static_cast<Eigen::Index>(v.size()) == n) {
      variances = Eigen::Map<const Vector>(v.data(), n);
    } else {
      fail(where + ".variances", "one variance per mean expected");
    }
  } else if (block.contains("variance")) {
    variances.setConstant(number(block["variance"], where + ".variance"));
  } else if (!empirical) {
    fail(where, "'variance' or 'variances' required unless empirical");
  }
  if (empirical && (variances.array() != 0.0).any()) fail(where, "empirical measures have zero variance");

  try {
    return GaussianMixture(weights, means, variances);
  } catch (const DomainError& e) {
    fail(where, e.what());
  }
}

Schedule RunConfig::schedule(double dt) const {
  return Schedule(beta_min, beta_max, t0, t1, t1_trunc.value_or(t1 - dt));
}

PerturbationSpec RunConfig::perturbation(const BackendConfig& b) const {
  PerturbationSpec spec{nu, sign, b.ratio_clamp};
  spec.validate();
  return spec;
}

RunConfig parse_config(const json& input, const fs::path& base_dir, const ConfigOverrides& ov) {
  json doc = input;
  if (!doc.is_object()) throw ConfigError("config: top level must be a table");
  allow_keys(doc, "config", {"experiment", "schedule", "rho", "nu", "perturbation", "sampling", "estimator",
                             "backend", "correlation", "output", "full"});
  if (ov.full) {
    if (doc.contains("full")) doc.merge_patch(doc["full"]);
  }
  doc.erase("full");
  if (doc.contains("experiment")) {
    static const std::vector<std::string> known{"remainder", "hutchinson", "correlate", "sample", "sensitivity",
                                                "ot-baseline"};
    const json& e = doc["experiment"];
    if (!e.is_string() || std::find(known.begin(), known.end(), e.get<std::string>()) == known.end()) {
      fail("config.experiment", "expected one of remainder, hutchinson, correlate, sample, sensitivity, ot-baseline");
    }
  }
  if (!ov.dts.empty()) doc["sampling"]["dt"] = ov.dts;
  if (!ov.etas.empty()) doc["sampling"]["eta"] = ov.etas;
  if (ov.seed) doc["sampling"]["seed"] = *ov.seed;

  RunConfig cfg;

  const json& sched = section(doc, "schedule");
  allow_keys(sched, "schedule", {"beta_min", "beta_max", "t0", "t1", "t1_trunc"});
  cfg.beta_min = number_or(sched, "beta_min", Schedule::kDefaultBetaMin, "schedule");
  cfg.beta_max = number_or(sched, "beta_max", Schedule::kDefaultBetaMax, "schedule");
  cfg.t0 = number_or(sched, "t0", 0.0, "schedule");
  cfg.t1 = number_or(sched, "t1", 1.0, "schedule");
  if (sched.contains("t1_trunc") && !sched["t1_trunc"].is_null()) {
    cfg.t1_trunc = number(sched["t1_trunc"], "schedule.t1_trunc");
  }

  for (const char* key : {"rho", "nu"}) {
    if (!doc.contains(key)) fail("config", std::string("missing '") + key + "' mixture");
    if (doc[key].contains("means_file")) {
      doc[key]["__resolved"] = resolve(doc[key]["means_file"].get<std::string>(), base_dir).string();
    }
  }
  try {
    cfg.rho = parse_mixture(doc["rho"], base_dir);
    cfg.nu = parse_mixture(doc["nu"], base_dir);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("rho/nu ") + e.what());
  }
  if (cfg.rho.dim() != cfg.nu.dim()) fail("nu", "dimension differs from rho");
  if (cfg.rho.has_atoms()) fail("rho", "the base measure needs positive variances");

  const json& pert = section(doc, "perturbation");
  allow_keys(pert, "perturbation", {"sign"});
  cfg.sign = static_cast<int>(number_or(pert, "sign", 1.0, "perturbation"));
  if (cfg.sign != 1 && cfg.sign != -1) fail("perturbation.sign", "must be +1 or -1");

  const json& samp = section(doc, "sampling");
  allow_keys(samp, "sampling", {"samplers", "dt", "eta", "batch", "seed", "workers"});
  if (samp.contains("samplers")) {
    cfg.samplers.clear();
    for (const auto& s : samp["samplers"]) cfg.samplers.push_back(parse_sampler(s, "sampling.samplers"));
    if (cfg.samplers.empty()) fail("sampling.samplers", "must not be empty");
  }
  if (!samp.contains("dt")) fail("sampling.dt", "required");
  cfg.dts = number_list(samp["dt"], "sampling.dt");
  cfg.etas = samp.contains("eta") ? number_list(samp["eta"], "sampling.eta") : std::vector<double>{};
  cfg.batch = static_cast<Eigen::Index>(unsigned_or(samp, "batch", 256, "sampling"));
  cfg.seed = unsigned_or(samp, "seed", 0, "sampling");
  cfg.workers = unsigned_or(samp, "workers", 1, "sampling");
  if (ov.workers) cfg.workers = *ov.workers;
  if (cfg.batch < 1) fail("sampling.batch", "must be at least 1");
  if (cfg.workers < 1) fail("sampling.workers", "must be at least 1");
  if (cfg.dts.empty()) fail("sampling.dt", "must not be empty");
  for (double dt : cfg.dts) {
    if (!(dt > 0.0)) fail("sampling.dt", "step sizes must be positive");
    try {
      const Schedule s = cfg.schedule(dt);
      const auto grid = IntegrationGrid::full(s, dt);
      grid.check_within(s);
      const double span = s.t1_trunc() - s.t0();
      if (std::abs(static_cast<double>(grid.n_steps) * dt - span) > 1e-9 * std::max(1.0, span)) {
        fail("sampling.dt", "step " + std::to_string(dt) + " does not divide [t0, t1_trunc]");
      }
    } catch (const DomainError& e) {
      fail("schedule", e.what());
    }
  }
  for (double eta : cfg.etas) {
    if (!(eta > 0.0 && eta <= 1.0)) fail("sampling.eta", "values must lie in (0, 1]");
  }

  const json& est = section(doc, "estimator");
  allow_keys(est, "estimator", {"probe_sweep"});
  if (est.contains("probe_sweep")) {
    cfg.probe_sweep.clear();
    for (double p : number_list(est["probe_sweep"], "estimator.probe_sweep")) {
      if (!(p >= 1.0) || p != std::floor(p)) fail("estimator.probe_sweep", "entries must be positive integers");
      cfg.probe_sweep.push_back(static_cast<std::size_t>(p));
    }
  }

  cfg.backend = parse_backend(section(doc, "backend"), "backend", cfg.seed, base_dir, ov.bin_dir);

  const json& corr = section(doc, "correlation");
  allow_keys(corr, "correlation", {"mode", "eta", "statistic", "candidate", "ot"});
  const std::string mode = string_or(corr, "mode", "retrain", "correlation");
  if (mode == "retrain") {
    cfg.correlation.mode = CorrelationConfig::Mode::retrain;
  } else if (mode == "backend") {
    cfg.correlation.mode = CorrelationConfig::Mode::backend;
  } else {
    fail("correlation.mode", "expected 'retrain' or 'backend'");
  }
  cfg.correlation.eta = number_or(corr, "eta", 0.1, "correlation");
  if (!(cfg.correlation.eta > 0.0 && cfg.correlation.eta <= 1.0)) fail("correlation.eta", "must lie in (0, 1]");
  const std::string statistic = string_or(corr, "statistic", "pearson", "correlation");
  if (statistic == "pearson") {
    cfg.correlation.statistic = stats::Correlation::pearson;
  } else if (statistic == "spearman") {
    cfg.correlation.statistic = stats::Correlation::spearman;
  } else {
    fail("correlation.statistic", "expected 'pearson' or 'spearman'");
  }
  cfg.correlation.candidate =
      parse_backend(section(corr, "candidate"), "correlation.candidate", cfg.seed, base_dir, ov.bin_dir);
  const json& ot = section(corr, "ot");
  allow_keys(ot, "correlation.ot", {"reg", "max_iter", "tol", "target", "n_targets", "standardize"});
  auto& o = cfg.correlation.ot;
  o.sinkhorn.reg = number_or(ot, "reg", 0.05, "correlation.ot");
  o.sinkhorn.max_iter = unsigned_or(ot, "max_iter", 10000, "correlation.ot");
  o.sinkhorn.tol = number_or(ot, "tol", 1e-9, "correlation.ot");
  if (!(o.sinkhorn.reg > 0.0)) fail("correlation.ot.reg", "must be positive");
  if (!(o.sinkhorn.tol > 0.0)) fail("correlation.ot.tol", "must be positive");
  const std::string target = string_or(ot, "target", "perturbed", "correlation.ot");
  if (target == "perturbed") {
    o.target = OtConfig::Target::perturbed;
  } else if (target == "nu") {
    o.target = OtConfig::Target::nu;
  } else {
    fail("correlation.ot.target", "expected 'perturbed' or 'nu'");
  }
  o.n_targets = static_cast<Eigen::Index>(unsigned_or(ot, "n_targets", 0, "correlation.ot"));
  if (ot.contains("standardize")) {
    if (!ot["standardize"].is_boolean()) fail("correlation.ot.standardize", "expected true or false");
    o.standardize = ot["standardize"].get<bool>();
  }

  const json& out = section(doc, "output");
  allow_keys(out, "output", {"dir"});
  cfg.output_dir = resolve(string_or(out, "dir", "out", "output"), base_dir);
  if (ov.output_dir) cfg.output_dir = *ov.output_dir;

  json canonical = doc;
  canonical.erase("output");
  if (canonical.contains("sampling")) canonical["sampling"].erase("workers");
  for (const char* key : {"rho", "nu"}) pin_files(canonical[key]);
  cfg.canonical = canonical;
  cfg.hash = fnv1a_hex(canonical.dump());
  return cfg;
}

RunConfig load_config(const fs::path& file, const ConfigOverrides& overrides) {
  const std::string text = slurp(file);
  json doc;
  try {
    doc = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
  return parse_config(doc, dir, overrides);
}

}  // namespace diffsens
