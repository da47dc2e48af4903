#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace diffsens {

struct RunConfig;

// One statistic per row. Empty sampler/statistic strings and NaN dt/eta are
// written as empty fields; n_probes is "exact" for closed-form densities.
struct ReportRecord {
  std::string experiment;
  std::string sampler;
  double dt;
  double eta;
  std::string n_probes;
  std::string statistic;
  long long index;  // -1 for batch summaries
  double value;
};

class ExperimentReport {
 public:
  ExperimentReport(std::string experiment, std::string config_hash, std::uint64_t seed);

  const std::string& experiment() const noexcept { return experiment_; }
  const std::string& config_hash() const noexcept { return config_hash_; }
  const std::vector<ReportRecord>& records() const noexcept { return records_; }
  // Free-form diagnostics for meta.json.
  nlohmann::json& diagnostics() noexcept { return diagnostics_; }
  const nlohmann::json& diagnostics() const noexcept { return diagnostics_; }

  void add(ReportRecord r);
  // Records whose statistic matches, in insertion order.
  std::vector<ReportRecord> select(const std::string& statistic) const;

  std::string to_csv() const;
  nlohmann::json metadata(const RunConfig& cfg) const;
  // Writes report.csv and meta.json into dir (created if needed).
  void write(const std::filesystem::path& dir, const RunConfig& cfg) const;

 private:
  std::string experiment_;
  std::string config_hash_;
  std::uint64_t seed_;
  std::vector<ReportRecord> records_;
  nlohmann::json diagnostics_ = nlohmann::json::object();
};

std::string csv_field(const std::string& s);
// %.17g, empty for NaN.
std::string csv_number(double x);

const char* git_revision() noexcept;
const char* library_version() noexcept;

}  // namespace diffsens
