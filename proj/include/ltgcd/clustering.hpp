#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ltgcd/core.hpp"

namespace ltgcd {

// Controls the mean-similarity term in the sharpening temperature: either
// the mean over samples of similarity to their nearest prototype, or the
// mean over all (sample, prototype) pairs.
enum class AlphaMean { NearestPrototype, AllPairs };

struct ClusterOptions {
  double gamma = 2.0;
  int kmeans_max_iter = 100;
  int max_iter = 200;          // self-training iterations
  double step = 0.1;           // prototype gradient step
  double tol = 1e-6;           // |delta L| stopping threshold
  AlphaMean alpha_mean = AlphaMean::NearestPrototype;
};

struct ClusterEstimate {
  std::vector<std::int64_t> sizes;  // per final class index
  Vector pi_tilde;                  // sizes normalized to a simplex
  double alpha = 0.0;               // last sharpening temperature used
  Matrix prototypes;                // C x h, rows in final class order
};

// k-means++ seeding followed by Lloyd iterations (Euclidean), repeated over
// several restarts keeping the lowest within-cluster SSE. Deterministic
// given the seed. Requires at least C rows.
Matrix kmeans_init(const Matrix& features, int num_clusters, std::uint64_t seed,
                   int max_iter = 100, int restarts = 20);

// Row-wise softmax of cosine similarities to the prototypes.
Matrix soft_assign(const Matrix& features, const Matrix& prototypes);

// Sharpened assignment: softmax of alpha * sim, with
// alpha = gamma - mean similarity (see AlphaMean). Returns (Phi, alpha).
std::pair<Matrix, double> target_assign(const Matrix& features,
                                        const Matrix& prototypes, double gamma,
                                        AlphaMean mean = AlphaMean::NearestPrototype);

// Mean row-wise KL(Phi || phi); Phi is a constant target.
double cluster_loss(const Matrix& Phi, const Matrix& phi);

// Gradient of cluster_loss with respect to the prototypes.
Matrix cluster_loss_grad(const Matrix& features, const Matrix& prototypes,
                         const Matrix& Phi, const Matrix& phi);

// Full long-tailed clustering pass: k-means init, self-training prototype
// updates, hard assignment, size counting. When labeled known-class
// centroids are given they seed the first clusters (novel clusters are
// seeded by farthest-point traversal), and the result is reindexed so that
// index k is the cluster Hungarian-matched to known class k; remaining
// clusters fill the novel indices in decreasing size order.
ClusterEstimate estimate_distribution(
    const Matrix& features, int num_clusters, std::uint64_t seed,
    const ClusterOptions& opts = {},
    const std::optional<Matrix>& known_centroids = std::nullopt);

}  // namespace ltgcd
