#include "diffsens/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "diffsens/config.hpp"
#include "diffsens/errors.hpp"
#include "diffsens/wire.hpp"

#ifndef DIFFSENS_GIT_REVISION
#define DIFFSENS_GIT_REVISION "unknown"
#endif

namespace diffsens {

namespace fs = std::filesystem;

const char* git_revision() noexcept { return DIFFSENS_GIT_REVISION; }
const char* library_version() noexcept { return "0.1.0"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string csv_number(double x) {
  if (std::isnan(x)) return {};
  return wire::format_double(x);
}

ExperimentReport::ExperimentReport(std::string experiment, std::string config_hash, std::uint64_t seed)
    : experiment_(std::move(experiment)), config_hash_(std::move(config_hash)), seed_(seed) {}

void ExperimentReport::add(ReportRecord r) { records_.push_back(std::move(r)); }

std::vector<ReportRecord> ExperimentReport::select(const std::string& statistic) const {
  std::vector<ReportRecord> out;
  for (const auto& r : records_) {
    if (r.statistic == statistic) out.push_back(r);
  }
  return out;
}

std::string ExperimentReport::to_csv() const {
  std::string out = "config_hash,experiment,sampler,dt,eta,n_probes,statistic,index,value\r\n";
  for (const auto& r : records_) {
    out += csv_field(config_hash_);
    out += ',' + csv_field(r.experiment);
    out += ',' + csv_field(r.sampler);
    out += ',' + csv_number(r.dt);
    out += ',' + csv_number(r.eta);
    out += ',' + csv_field(r.n_probes);
    out += ',' + csv_field(r.statistic);
    out += ',' + (r.index < 0 ? std::string() : std::to_string(r.index));
    out += ',' + (std::isnan(r.value) ? std::string("nan") : csv_number(r.value));
    out += "\r\n";
  }
  return out;
}

nlohmann::json ExperimentReport::metadata(const RunConfig& cfg) const {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return {
      {"experiment", experiment_},
      {"config_hash", config_hash_},
      {"seed", seed_},
      {"git_revision", git_revision()},
      {"version", library_version()},
      {"workers", cfg.workers},
      {"timestamp", stamp},
      {"config", cfg.canonical},
      {"diagnostics", diagnostics_},
  };
}

void ExperimentReport::write(const fs::path& dir, const RunConfig& cfg) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  {
    std::ofstream csv(dir / "report.csv", std::ios::binary);
    csv << to_csv();
    if (!csv) throw ConfigError("cannot write " + (dir / "report.csv").string());
  }
  std::ofstream meta(dir / "meta.json", std::ios::binary);
  meta << metadata(cfg).dump(2) << '\n';
  if (!meta) throw ConfigError("cannot write " + (dir / "meta.json").string());
}

}  // namespace diffsens
