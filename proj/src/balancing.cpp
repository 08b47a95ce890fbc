#include "ltgcd/balancing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ltgcd {

NeighborhoodIndex build_neighborhoods(const Matrix& reps, int k, int epoch) {
  const Eigen::Index M = reps.rows();
  require(k >= 1, "need at least one neighbor");
  require(M > k, "need more samples than neighbors");
  Vector norms = reps.rowwise().norm();
  if ((norms.array() == 0.0).any())
    throw NumericalError("zero-norm representation; cosine kNN undefined");

  NeighborhoodIndex index;
  index.k = k;
  index.built_at_epoch = epoch;
  index.neighbors.resize(M);
  std::vector<int> order(M - 1);
  for (Eigen::Index i = 0; i < M; ++i) {
    Vector sims = (reps * reps.row(i).transpose()).cwiseQuotient(norms) /
                  norms[i];
    int n = 0;
    for (Eigen::Index j = 0; j < M; ++j)
      if (j != i) order[n++] = static_cast<int>(j);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int b) {
                        if (sims[a] != sims[b]) return sims[a] > sims[b];
                        return a < b;  // tie toward the lower index
                      });
    index.neighbors[i].assign(order.begin(), order.begin() + k);
  }
  return index;
}

double density_weight(const Matrix& members) {
  const Eigen::Index n = members.rows();  // K + 1
  require(n >= 2, "density weight needs at least two members");
  Vector norms = members.rowwise().norm();
  if ((norms.array() == 0.0).any())
    throw NumericalError("zero-norm member in density weight");
  double sum = 0.0;
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      if (a != b) sum += members.row(a).dot(members.row(b)) / (norms[a] * norms[b]);
  const double k = static_cast<double>(n - 1);
  return -sum / (k * (k + 1.0));
}

Vector local_mean(const Matrix& members) {
  require(members.rows() >= 1, "local mean of empty set");
  return members.colwise().mean().transpose();
}

BalancedLossResult balanced_loss(const Matrix& z_batch,
                                 const std::vector<int>& batch_ids,
                                 const NeighborhoodIndex& index,
                                 const Matrix& snapshot_reps) {
  require(z_batch.rows() == static_cast<Eigen::Index>(batch_ids.size()),
          "balanced_loss batch id count mismatch");
  const Eigen::Index B = z_batch.rows();
  const int K = index.k;
  BalancedLossResult res;
  res.grad = Matrix::Zero(B, z_batch.cols());
  res.weights = Vector::Constant(B, std::numeric_limits<double>::quiet_NaN());

  for (Eigen::Index i = 0; i < B; ++i) {
    const int id = batch_ids[static_cast<std::size_t>(i)];
    require(id >= 0 && id < static_cast<int>(index.neighbors.size()),
            "batch id outside neighborhood index");
    Matrix members(K + 1, snapshot_reps.cols());
    members.row(0) = snapshot_reps.row(id);
    for (int m = 0; m < K; ++m)
      members.row(m + 1) = snapshot_reps.row(index.neighbors[id][m]);

    const Vector mu = local_mean(members);
    const double mu_norm = mu.norm();
    if (mu_norm < 1e-12) {
      res.skipped.push_back(static_cast<int>(i));
      continue;
    }
    const double w = density_weight(members);
    res.weights[i] = w;

    const Vector zi = z_batch.row(i).transpose();
    const double zn = zi.norm();
    if (zn == 0.0) throw NumericalError("zero-norm batch representation");
    const double sim = zi.dot(mu) / (zn * mu_norm);
    res.value += (1.0 + w) * (1.0 - sim);

    // dsim/dz = mu/(|z||mu|) - sim z / |z|^2.
    Vector dsim = mu / (zn * mu_norm) - sim / (zn * zn) * zi;
    res.grad.row(i) = -(1.0 + w) * dsim.transpose();
  }
  res.value /= static_cast<double>(B);
  res.grad /= static_cast<double>(B);
  return res;
}

}  // namespace ltgcd
