#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "diffsens/types.hpp"

namespace diffsens {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A block is a
// pure function of (counter, key), so any draw can be regenerated from its
// coordinates without replaying a sequential state.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) noexcept;
};

// Named substreams of a run seed.
enum class Substream : std::uint64_t {
  base_samples = 1,
  path_noise = 2,
  hutchinson = 3,
  ot_targets = 4,
  mixture_draws = 5,
};

// Standard normal draws addressed by two 64-bit coordinates, e.g.
// (step, row) for path noise or (step, probe) for Hutchinson probes.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream) noexcept;
  NormalStream(std::uint64_t seed, Substream stream) noexcept
      : NormalStream(seed, static_cast<std::uint64_t>(stream)) {}

  void fill(std::uint64_t major, std::uint64_t minor, std::span<double> out) const noexcept;
  Vector draw(std::uint64_t major, std::uint64_t minor, Eigen::Index n) const;
  // Uniform on [0, 1) at the given coordinates.
  double uniform(std::uint64_t major, std::uint64_t minor) const noexcept;

  // B x d batch where row i is draw(major, i, d).
  Batch batch(std::uint64_t major, Eigen::Index rows, Eigen::Index cols) const;

 private:
  Philox4x32::Counter counter(std::uint64_t major, std::uint64_t minor, std::uint32_t j) const noexcept;
  Philox4x32::Key key_;
};

}  // namespace diffsens
