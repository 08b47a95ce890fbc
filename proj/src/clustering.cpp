#include "ltgcd/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ltgcd/assignment.hpp"

namespace ltgcd {

namespace {

// Cosine similarities between feature rows and prototype rows.
Matrix similarity_matrix(const Matrix& features, const Matrix& prototypes) {
  require_finite(features, "clustering features");
  require_finite(prototypes, "prototypes");
  Vector fn = features.rowwise().norm();
  Vector pn = prototypes.rowwise().norm();
  if ((fn.array() == 0.0).any())
    throw NumericalError("zero-norm feature row; cosine similarity undefined");
  if ((pn.array() == 0.0).any())
    throw NumericalError("zero-norm prototype; cosine similarity undefined");
  Matrix s = features * prototypes.transpose();
  s.array().colwise() /= fn.array();
  s.array().rowwise() /= pn.transpose().array();
  return s;
}

Matrix row_softmax(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    Eigen::ArrayXd e = (scores.row(i).array() - m).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return out;
}

}  // namespace

namespace {

// Lloyd iterations from the given initial centers, in place.
void lloyd(const Matrix& features, Matrix& centers, int max_iter) {
  const Eigen::Index M = features.rows();
  const int num_clusters = static_cast<int>(centers.rows());
  std::vector<int> assign(M, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < M; ++i) {
      int best = 0;
      double best_d = (features.row(i) - centers.row(0)).squaredNorm();
      for (int c = 1; c < num_clusters; ++c) {
        const double d = (features.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    Matrix sums = Matrix::Zero(num_clusters, features.cols());
    std::vector<int> counts(num_clusters, 0);
    for (Eigen::Index i = 0; i < M; ++i) {
      sums.row(assign[i]) += features.row(i);
      counts[assign[i]]++;
    }
    for (int c = 0; c < num_clusters; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        // Reseed an empty cluster at the point farthest from its center.
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < M; ++i) {
          const double d =
              (features.row(i) - centers.row(assign[i])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers.row(c) = features.row(far);
      }
    }
  }
}

Matrix kmeans_single(const Matrix& features, int num_clusters,
                     std::uint64_t seed, int max_iter) {
  const Eigen::Index M = features.rows();
  Rng rng(seed);

  // k-means++ seeding.
  Matrix centers(num_clusters, features.cols());
  centers.row(0) = features.row(rng.index(M));
  Vector d2 = (features.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < num_clusters; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = rng.index(M);
    } else {
      double r = rng.uniform() * total;
      for (; pick < M - 1; ++pick) {
        r -= d2[pick];
        if (r <= 0.0) break;
      }
    }
    centers.row(c) = features.row(pick);
    d2 = d2.cwiseMin(
        (features.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  lloyd(features, centers, max_iter);
  return centers;
}

// Deterministic seeded k-means: the first rows of centers come from the
// caller (labeled class centroids); remaining centers are placed by
// farthest-point traversal before Lloyd refinement.
Matrix kmeans_seeded(const Matrix& features, int num_clusters,
                     const Matrix& known, int max_iter) {
  const int K = static_cast<int>(known.rows());
  Matrix centers(num_clusters, features.cols());
  centers.topRows(K) = known;
  Vector d2 = (features.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k)
    d2 = d2.cwiseMin(
        (features.rowwise() - centers.row(k)).rowwise().squaredNorm());
  for (int c = K; c < num_clusters; ++c) {
    Eigen::Index far;
    d2.maxCoeff(&far);
    centers.row(c) = features.row(far);
    d2 = d2.cwiseMin(
        (features.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  lloyd(features, centers, max_iter);
  return centers;
}

double kmeans_sse(const Matrix& features, const Matrix& centers) {
  double sse = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.rows(); ++c)
      best = std::min(best, (features.row(i) - centers.row(c)).squaredNorm());
    sse += best;
  }
  return sse;
}

}  // namespace

Matrix kmeans_init(const Matrix& features, int num_clusters, std::uint64_t seed,
                   int max_iter, int restarts) {
  require(features.rows() >= num_clusters,
          "k-means needs at least as many samples as clusters");
  require(num_clusters >= 1, "need at least one cluster");
  require(restarts >= 1, "need at least one restart");
  // Seeding is sensitive on imbalanced data (a large cluster can absorb two
  // centers); keep the restart with the lowest within-cluster SSE.
  Matrix best;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    const Matrix c = kmeans_single(features, num_clusters,
                                   seed + 0x9e3779b97f4a7c15ULL * r, max_iter);
    const double sse = kmeans_sse(features, c);
    if (sse < best_sse) {
      best_sse = sse;
      best = c;
    }
  }
  return best;
}

Matrix soft_assign(const Matrix& features, const Matrix& prototypes) {
  return row_softmax(similarity_matrix(features, prototypes));
}

std::pair<Matrix, double> target_assign(const Matrix& features,
                                        const Matrix& prototypes, double gamma,
                                        AlphaMean mean) {
  const Matrix s = similarity_matrix(features, prototypes);
  double mean_sim;
  if (mean == AlphaMean::NearestPrototype) {
    mean_sim = s.rowwise().maxCoeff().mean();
  } else {
    mean_sim = s.mean();
  }
  const double alpha = gamma - mean_sim;
  return {row_softmax(alpha * s), alpha};
}

double cluster_loss(const Matrix& Phi, const Matrix& phi) {
  require(Phi.rows() == phi.rows() && Phi.cols() == phi.cols(),
          "cluster_loss shape mismatch");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < Phi.rows(); ++i)
    for (Eigen::Index c = 0; c < Phi.cols(); ++c) {
      const double t = Phi(i, c);
      if (t > 0.0)
        loss += t * (std::log(std::max(t, kEpsFloor)) -
                     std::log(std::max(phi(i, c), kEpsFloor)));
    }
  return loss / static_cast<double>(Phi.rows());
}

Matrix cluster_loss_grad(const Matrix& features, const Matrix& prototypes,
                         const Matrix& Phi, const Matrix& phi) {
  const Eigen::Index M = features.rows();
  const Matrix s = similarity_matrix(features, prototypes);
  // dL/ds_ic = (phi_ic - Phi_ic) / M with Phi held constant.
  const Matrix ds = (phi - Phi) / static_cast<double>(M);

  Vector fn = features.rowwise().norm();
  Vector pn = prototypes.rowwise().norm();
  Matrix grad = Matrix::Zero(prototypes.rows(), prototypes.cols());
  for (Eigen::Index c = 0; c < prototypes.rows(); ++c) {
    // ds_ic/dp_c = v_i / (|v_i||p_c|) - s_ic p_c / |p_c|^2.
    Vector acc = Vector::Zero(prototypes.cols());
    double radial = 0.0;
    for (Eigen::Index i = 0; i < M; ++i) {
      acc += ds(i, c) / (fn[i] * pn[c]) * features.row(i).transpose();
      radial += ds(i, c) * s(i, c);
    }
    grad.row(c) =
        (acc - radial / (pn[c] * pn[c]) * prototypes.row(c).transpose())
            .transpose();
  }
  return grad;
}

ClusterEstimate estimate_distribution(
    const Matrix& features, int num_clusters, std::uint64_t seed,
    const ClusterOptions& opts, const std::optional<Matrix>& known_centroids) {
  Matrix protos;
  if (known_centroids && known_centroids->rows() > 0) {
    require(known_centroids->rows() <= num_clusters,
            "more known classes than clusters");
    require(known_centroids->cols() == features.cols(),
            "known centroid width mismatch");
    protos = kmeans_seeded(features, num_clusters, *known_centroids,
                           opts.kmeans_max_iter);
  } else {
    protos =
        kmeans_init(features, num_clusters, seed, opts.kmeans_max_iter);
  }

  double prev_loss = std::numeric_limits<double>::infinity();
  double alpha = 0.0;
  if (num_clusters > 1) {
    for (int iter = 0; iter < opts.max_iter; ++iter) {
      auto [Phi, a] = target_assign(features, protos, opts.gamma, opts.alpha_mean);
      alpha = a;
      const Matrix phi = soft_assign(features, protos);
      const double loss = cluster_loss(Phi, phi);
      if (std::abs(prev_loss - loss) < opts.tol) break;
      prev_loss = loss;
      protos -= opts.step * cluster_loss_grad(features, protos, Phi, phi);
    }
  }

  // Hard assignment and size counting.
  const Matrix phi = soft_assign(features, protos);
  std::vector<std::int64_t> counts(num_clusters, 0);
  for (Eigen::Index i = 0; i < phi.rows(); ++i) {
    Eigen::Index best;
    phi.row(i).maxCoeff(&best);
    counts[best]++;
  }

  // Reindex clusters: known classes take their Hungarian-matched cluster,
  // remaining clusters fill novel slots by decreasing size.
  std::vector<int> order(num_clusters);
  if (known_centroids && known_centroids->rows() > 0) {
    const int K = static_cast<int>(known_centroids->rows());
    require(K <= num_clusters, "more known classes than clusters");
    const Matrix sim = similarity_matrix(*known_centroids, protos);
    const std::vector<int> match = solve_assignment(-sim);
    std::vector<char> taken(num_clusters, 0);
    for (int k = 0; k < K; ++k) {
      order[k] = match[k];
      taken[match[k]] = 1;
    }
    std::vector<int> rest;
    for (int c = 0; c < num_clusters; ++c)
      if (!taken[c]) rest.push_back(c);
    std::stable_sort(rest.begin(), rest.end(),
                     [&](int a, int b) { return counts[a] > counts[b]; });
    for (std::size_t j = 0; j < rest.size(); ++j) order[K + j] = rest[j];
  } else {
    std::iota(order.begin(), order.end(), 0);
  }

  ClusterEstimate est;
  est.alpha = alpha;
  est.sizes.resize(num_clusters);
  est.prototypes.resize(num_clusters, protos.cols());
  double total = 0.0;
  for (int c = 0; c < num_clusters; ++c) {
    est.sizes[c] = counts[order[c]];
    est.prototypes.row(c) = protos.row(order[c]);
    total += static_cast<double>(counts[order[c]]);
  }
  est.pi_tilde.resize(num_clusters);
  for (int c = 0; c < num_clusters; ++c)
    est.pi_tilde[c] = static_cast<double>(est.sizes[c]) / total;
  return est;
}

}  // namespace ltgcd
