#include "diffsens/rng.hpp"

#include <cmath>
#include <numbers>

namespace diffsens {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// 53-bit uniform in (0, 1].
inline double open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter ctr, Key key) noexcept {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t stream) noexcept {
  const std::uint64_t k = splitmix64(seed ^ splitmix64(stream));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

Philox4x32::Counter NormalStream::counter(std::uint64_t major, std::uint64_t minor,
                                          std::uint32_t j) const noexcept {
  // minor is folded to 32 bits; rows and probes never approach 2^32.
  return {static_cast<std::uint32_t>(major), static_cast<std::uint32_t>(major >> 32),
          static_cast<std::uint32_t>(minor), j};
}

void NormalStream::fill(std::uint64_t major, std::uint64_t minor, std::span<double> out) const noexcept {
  const std::size_t n = out.size();
  for (std::size_t i = 0, j = 0; i < n; i += 2, ++j) {
    const auto r = Philox4x32::block(counter(major, minor, static_cast<std::uint32_t>(j)), key_);
    // Box-Muller on a pair of 53-bit uniforms.
    const double u1 = open_unit(r[0], r[1]);
    const double u2 = open_unit(r[2], r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[i] = radius * std::cos(angle);
    if (i + 1 < n) out[i + 1] = radius * std::sin(angle);
  }
}

Vector NormalStream::draw(std::uint64_t major, std::uint64_t minor, Eigen::Index n) const {
  Vector v(n);
  fill(major, minor, std::span<double>(v.data(), static_cast<std::size_t>(n)));
  return v;
}

double NormalStream::uniform(std::uint64_t major, std::uint64_t minor) const noexcept {
  const auto r = Philox4x32::block(counter(major, minor, 0xFFFFFFFFu), key_);
  return open_unit(r[0], r[1]) - 0x1.0p-53;
}

Batch NormalStream::batch(std::uint64_t major, Eigen::Index rows, Eigen::Index cols) const {
  Batch out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    fill(major, static_cast<std::uint64_t>(i),
         std::span<double>(out.row(i).data(), static_cast<std::size_t>(cols)));
  }
  return out;
}

}  // namespace diffsens
