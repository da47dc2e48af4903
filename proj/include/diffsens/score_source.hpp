#pragma once

#include <memory>
#include <mutex>
#include <string>

#include "diffsens/mixture.hpp"
#include "diffsens/types.hpp"

namespace diffsens {

class Subprocess;

// Where scores come from. Implementations must be deterministic: identical
// (s, z) queries return identical values.
class ScoreSource {
 public:
  virtual ~ScoreSource() = default;

  virtual Eigen::Index dim() const = 0;

  // Row i of the result is the score at (s, z.row(i)).
  virtual Batch score_batch(double s, const Batch& z) const = 0;

  // Row i is J_z[score](s, z_i) u_i. The default is a central difference
  // with a per-row step, see fd_score_jvp_batch.
  virtual Batch score_jvp_batch(double s, const Batch& z, const Batch& u) const;

  // Exact trace of the score Jacobian per row. Default: d coordinate JVPs.
  virtual Vector score_divergence_batch(double s, const Batch& z) const;

  // Closed-form log-density channel, when the backend has one.
  virtual bool has_exact_density() const { return false; }
  virtual Vector log_density_batch(double s, const Batch& z) const;

  // False when queries must not be issued from several threads at once.
  virtual bool concurrent() const { return true; }

  Vector score(double s, const Vector& z) const;
  Vector score_jvp(double s, const Vector& z, const Vector& u) const;
};

// Central difference (score(z + eps u) - score(z - eps u)) / (2 eps) with
// eps = sqrt(machine epsilon) (1 + |z|) / max(|u|, tiny), row by row. Rows
// with u = 0 yield 0 without querying the source.
Batch fd_score_jvp_batch(const ScoreSource& src, double s, const Batch& z, const Batch& u);

class AnalyticScoreSource final : public ScoreSource {
 public:
  explicit AnalyticScoreSource(DiffusedMeasure measure) : measure_(std::move(measure)) {}

  const DiffusedMeasure& measure() const noexcept { return measure_; }

  Eigen::Index dim() const override { return measure_.dim(); }
  Batch score_batch(double s, const Batch& z) const override;
  Batch score_jvp_batch(double s, const Batch& z, const Batch& u) const override;
  Vector score_divergence_batch(double s, const Batch& z) const override;
  bool has_exact_density() const override { return true; }
  Vector log_density_batch(double s, const Batch& z) const override;

 private:
  DiffusedMeasure measure_;
};

// Score model living in a child process, reached over newline-delimited JSON
// on its stdin/stdout (see wire.hpp). One request in flight at a time.
class ExternalScoreSource final : public ScoreSource {
 public:
  // Launches `command` through /bin/sh, performs the hello handshake and a
  // determinism echo check. Throws TransportError on any failure.
  ExternalScoreSource(const std::string& command, Eigen::Index dim);
  ~ExternalScoreSource() override;

  ExternalScoreSource(const ExternalScoreSource&) = delete;
  ExternalScoreSource& operator=(const ExternalScoreSource&) = delete;

  Eigen::Index dim() const override { return dim_; }
  Batch score_batch(double s, const Batch& z) const override;
  bool concurrent() const override { return false; }

  // Sends shutdown and waits; returns the child's exit status.
  int shutdown();

  std::size_t requests_sent() const noexcept { return requests_; }

 private:
  void handshake();
  Batch request(double s, const Batch& z) const;

  Eigen::Index dim_;
  std::unique_ptr<Subprocess> proc_;
  mutable std::mutex mutex_;
  mutable std::size_t requests_ = 0;
};

}  // namespace diffsens
