#pragma once

#include <cstddef>

#include "diffsens/types.hpp"

namespace diffsens {

struct SinkhornOptions {
  double reg = 0.05;
  std::size_t max_iter = 10000;
  // Stop once the largest marginal violation falls below this.
  double tol = 1e-9;
};

// Entropic transport plan between two uniformly weighted point clouds.
struct Coupling {
  Matrix plan;  // B x M
  Vector marginal_a;
  Vector marginal_b;
  double reg = 0.0;
  std::size_t iterations_used = 0;
  double max_violation = 0.0;
  bool converged = false;
};

// Squared Euclidean cost matrix.
Matrix squared_distances(const Batch& a, const Batch& b);

// Log-domain Sinkhorn on dual potentials with squared Euclidean cost and
// uniform marginals. Non-convergence is reported through `converged`, not
// thrown. Swapping the inputs yields the exact transpose.
Coupling sinkhorn_log(const Batch& a, const Batch& b, const SinkhornOptions& opts = {});

// Row i: barycentric image of source i under the row-normalized plan minus
// source i. Throws DomainError on an all-zero plan row.
Batch transport_rays(const Coupling& c, const Batch& sources, const Batch& targets);

// Per-feature standardization of both clouds with the pooled mean and
// standard deviation (features with zero spread are only centered).
void standardize_features(Batch& a, Batch& b);

}  // namespace diffsens
