#pragma once

#include <filesystem>
#include <string>

#include "diffsens/mixture.hpp"

namespace fixtures {

inline const std::filesystem::path source_dir{DIFFSENS_SOURCE_DIR};
inline const std::filesystem::path bin_dir{DIFFSENS_BIN_DIR};

inline std::filesystem::path config(const std::string& name) { return source_dir / "configs" / name; }

// Two isotropic Gaussians at -(1,...,1) and +(1,...,1), sigma = 0.1.
inline diffsens::GaussianMixture two_modes(Eigen::Index d) {
  diffsens::Batch means(2, d);
  means.row(0).setConstant(-1.0);
  means.row(1).setConstant(1.0);
  return diffsens::GaussianMixture(diffsens::Vector::Constant(2, 0.5), means, diffsens::Vector::Constant(2, 0.01));
}

// Gaussian at +(1,...,1), sigma = 0.1.
inline diffsens::GaussianMixture upper_mode(Eigen::Index d) {
  return diffsens::GaussianMixture::single(diffsens::Vector::Constant(d, 1.0), 0.01);
}

// The two-mode mixture moved eta of the way towards upper_mode: weights
// (1 - eta) / 2 and (1 + eta) / 2. Valid for eta in [-1, 1].
inline diffsens::GaussianMixture two_modes_shifted(Eigen::Index d, double eta) {
  diffsens::GaussianMixture base = two_modes(d);
  diffsens::Vector w(2);
  w << 0.5 * (1.0 - eta), 0.5 * (1.0 + eta);
  return diffsens::GaussianMixture(w, base.means(), base.variances());
}

}  // namespace fixtures
