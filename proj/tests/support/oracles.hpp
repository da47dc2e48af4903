// Independent reference implementations for tests. Nothing here calls into
// the library's numerics: mixtures are summed directly in long double, the
// schedule is re-derived from its closed form, Sinkhorn runs as a plain
// matrix-scaling fixed point.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "diffsens/types.hpp"

namespace oracle {

using ld = long double;

// VP schedule on [0, 1] with beta(tau) = 0.1 + 19.9 tau.
inline ld integrated_beta(ld s) {
  const ld tau = 1.0L - s;
  return 0.1L * tau + 0.5L * 19.9L * tau * tau;
}
inline ld alpha(ld s) { return std::exp(-0.5L * integrated_beta(s)); }
inline ld sigma2(ld s) { return -std::expm1(-integrated_beta(s)); }

struct Component {
  ld weight;
  std::vector<ld> mean;
  ld variance;
};

// Signed mixture of isotropic Gaussians (weights may be negative as long as
// the total density stays positive where it is evaluated).
struct Mixture {
  std::vector<Component> parts;

  std::size_t dim() const { return parts.front().mean.size(); }

  // Mixture of the same bases after diffusion to time s.
  Mixture at(ld s) const {
    Mixture m;
    const ld a = alpha(s), sg2 = sigma2(s);
    for (const auto& c : parts) {
      Component d{c.weight, c.mean, a * a * c.variance + sg2};
      for (auto& x : d.mean) x *= a;
      m.parts.push_back(d);
    }
    return m;
  }

  // Weighted sum a * this + b * other.
  Mixture combine(ld a, const Mixture& other, ld b) const {
    Mixture m;
    for (auto c : parts) {
      c.weight *= a;
      m.parts.push_back(c);
    }
    for (auto c : other.parts) {
      c.weight *= b;
      m.parts.push_back(c);
    }
    return m;
  }

  // Density divided by exp(shift) together with the shift, to stay in range.
  void terms(const std::vector<ld>& z, std::vector<ld>& logk, ld& shift) const {
    logk.clear();
    shift = -INFINITY;
    const ld d = static_cast<ld>(z.size());
    for (const auto& c : parts) {
      ld r2 = 0;
      for (std::size_t j = 0; j < z.size(); ++j) r2 += (z[j] - c.mean[j]) * (z[j] - c.mean[j]);
      const ld l = -0.5L * r2 / c.variance - 0.5L * d * std::log(2.0L * M_PIl * c.variance);
      logk.push_back(l);
      shift = std::max(shift, l);
    }
  }

  ld log_density(const std::vector<ld>& z) const {
    std::vector<ld> logk;
    ld shift;
    terms(z, logk, shift);
    ld p = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) p += parts[k].weight * std::exp(logk[k] - shift);
    return shift + std::log(p);
  }

  std::vector<ld> score(const std::vector<ld>& z) const {
    std::vector<ld> logk;
    ld shift;
    terms(z, logk, shift);
    ld p = 0;
    std::vector<ld> grad(z.size(), 0.0L);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const ld w = parts[k].weight * std::exp(logk[k] - shift);
      p += w;
      for (std::size_t j = 0; j < z.size(); ++j) grad[j] += w * (parts[k].mean[j] - z[j]) / parts[k].variance;
    }
    for (auto& g : grad) g /= p;
    return grad;
  }
};

inline std::vector<ld> to_ld(const diffsens::Vector& v) { return std::vector<ld>(v.begin(), v.end()); }

inline diffsens::Vector to_vec(const std::vector<ld>& v) {
  diffsens::Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = static_cast<double>(v[i]);
  return out;
}

// Plain Sinkhorn-Knopp scaling on K = exp(-C / reg) with uniform marginals,
// iterated to a fixed point.
inline std::vector<std::vector<ld>> dense_sinkhorn(const std::vector<std::vector<ld>>& a,
                                                   const std::vector<std::vector<ld>>& b, ld reg,
                                                   int iterations = 20000) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<ld>> K(n, std::vector<ld>(m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      ld c = 0;
      for (std::size_t k = 0; k < a[i].size(); ++k) c += (a[i][k] - b[j][k]) * (a[i][k] - b[j][k]);
      K[i][j] = std::exp(-c / reg);
    }
  }
  std::vector<ld> u(n, 1.0L), v(m, 1.0L);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      ld s = 0;
      for (std::size_t j = 0; j < m; ++j) s += K[i][j] * v[j];
      u[i] = (1.0L / n) / s;
    }
    for (std::size_t j = 0; j < m; ++j) {
      ld s = 0;
      for (std::size_t i = 0; i < n; ++i) s += K[i][j] * u[i];
      v[j] = (1.0L / m) / s;
    }
  }
  std::vector<std::vector<ld>> plan(n, std::vector<ld>(m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) plan[i][j] = u[i] * K[i][j] * v[j];
  }
  return plan;
}

inline diffsens::Batch gaussian_batch(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, scale);
  diffsens::Batch b(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) b(i, j) = n(gen);
  }
  return b;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("diffsens-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
