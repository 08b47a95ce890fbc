#pragma once

#include <vector>

#include "ltgcd/core.hpp"

namespace ltgcd {

// K nearest neighbors per sample by cosine similarity, excluding the
// sample itself; ties break toward the lower index.
struct NeighborhoodIndex {
  std::vector<std::vector<int>> neighbors;  // exactly K ids per sample
  int k = 0;
  int built_at_epoch = 0;
};

NeighborhoodIndex build_neighborhoods(const Matrix& reps, int k,
                                      int epoch = 0);

// Density weight over the K+1 members of a neighborhood: negative mean
// pairwise cosine similarity over ordered distinct pairs.
double density_weight(const Matrix& members);

// Plain average of the member rows (not renormalized).
Vector local_mean(const Matrix& members);

struct BalancedLossResult {
  double value = 0.0;
  Matrix grad;              // w.r.t. the live batch representations
  std::vector<int> skipped; // batch positions with a degenerate local mean
  Vector weights;           // w_i per batch row (NaN when skipped)
};

// (1/B) sum (1 + w_i)(1 - sim(z_i, mu_i)); w_i and mu_i come from the
// snapshot representations and are constants for the gradient.
BalancedLossResult balanced_loss(const Matrix& z_batch,
                                 const std::vector<int>& batch_ids,
                                 const NeighborhoodIndex& index,
                                 const Matrix& snapshot_reps);

}  // namespace ltgcd
