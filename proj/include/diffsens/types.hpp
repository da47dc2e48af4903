#pragma once

#include <Eigen/Dense>

namespace diffsens {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// B x d batch of points, one point per row.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace diffsens
