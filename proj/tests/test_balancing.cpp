#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "ltgcd/balancing.hpp"
#include "ltgcd/core.hpp"

using namespace ltgcd;

namespace {

Matrix unit_rows(int n, int d, Rng& rng) {
  Matrix m = rng.gaussian_matrix(n, d);
  for (int i = 0; i < n; ++i) m.row(i).normalize();
  return m;
}

// Brute-force kNN oracle: full pairwise cosine similarities, stable sort
// with the same lower-index tie rule.
std::vector<std::vector<int>> knn_oracle(const Matrix& reps, int k) {
  const int M = static_cast<int>(reps.rows());
  std::vector<std::vector<int>> out(M);
  for (int i = 0; i < M; ++i) {
    std::vector<std::pair<double, int>> scored;
    for (int j = 0; j < M; ++j)
      if (j != i)
        scored.push_back({cosine_sim(reps.row(j), reps.row(i)), j});
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int m = 0; m < k; ++m) out[i].push_back(scored[m].second);
  }
  return out;
}

}  // namespace

TEST_CASE("neighborhoods match a brute-force oracle on random data") {
  Rng rng(3);
  const Matrix reps = unit_rows(50, 8, rng);
  for (int k : {1, 5, 12}) {
    const NeighborhoodIndex idx = build_neighborhoods(reps, k, 4);
    const auto oracle = knn_oracle(reps, k);
    CHECK(idx.k == k);
    CHECK(idx.built_at_epoch == 4);
    for (int i = 0; i < 50; ++i) CHECK(idx.neighbors[i] == oracle[i]);
  }
}

TEST_CASE("neighborhood ties break toward the lower index") {
  // Three identical points plus one far away: every pair among the first
  // three ties at similarity 1.
  Matrix reps(4, 2);
  reps << 1, 0, 1, 0, 1, 0, 0, 1;
  const NeighborhoodIndex idx = build_neighborhoods(reps, 2);
  CHECK(idx.neighbors[0] == std::vector<int>{1, 2});
  CHECK(idx.neighbors[1] == std::vector<int>{0, 2});
  CHECK(idx.neighbors[2] == std::vector<int>{0, 1});
  CHECK(idx.neighbors[3] == std::vector<int>{0, 1});
}

TEST_CASE("neighborhood input validation") {
  Rng rng(1);
  const Matrix reps = unit_rows(5, 3, rng);
  CHECK_THROWS_AS(build_neighborhoods(reps, 0), ConfigError);
  CHECK_THROWS_AS(build_neighborhoods(reps, 5), ConfigError);
  Matrix with_zero = reps;
  with_zero.row(2).setZero();
  CHECK_THROWS_AS(build_neighborhoods(with_zero, 2), NumericalError);
}

TEST_CASE("density weight: hand values") {
  // Identical members: every pairwise similarity is 1, so the weight is
  // -K(K+1)/(K(K+1)) = -1 for any K.
  Matrix same(4, 2);
  same << 1, 0, 1, 0, 1, 0, 1, 0;
  CHECK(density_weight(same) == doctest::Approx(-1.0).epsilon(1e-12));

  // Two orthogonal members (K = 1): all cross similarities are 0.
  Matrix ortho(2, 2);
  ortho << 1, 0, 0, 1;
  CHECK(density_weight(ortho) == doctest::Approx(0.0));

  // Two antipodal members: ordered-pair sum = -2, divided by 1 * 2.
  Matrix anti(2, 2);
  anti << 1, 0, -1, 0;
  CHECK(density_weight(anti) == doctest::Approx(1.0).epsilon(1e-12));

  // Mixed K = 2 case: members e1, e1, e2. Ordered-pair similarity sum is
  // 2 (the identical pair both ways); weight = -2 / (2 * 3) = -1/3.
  Matrix mixed(3, 2);
  mixed << 1, 0, 1, 0, 0, 1;
  CHECK(density_weight(mixed) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(density_weight(Matrix::Ones(1, 2)), ConfigError);
  CHECK_THROWS_AS(density_weight(Matrix::Zero(2, 2)), NumericalError);
}

TEST_CASE("density weight stays in [-1, 1] and ranks dense below sparse") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix members = unit_rows(6, 4, rng);
    const double w = density_weight(members);
    CHECK(w >= -1.0 - 1e-12);
    CHECK(w <= 1.0 + 1e-12);
  }

  // A tight cluster must get a smaller weight than a well-spread set.
  Matrix tight = unit_rows(5, 6, rng);
  const Matrix base = tight.row(0);
  for (int i = 1; i < 5; ++i)
    tight.row(i) = (base + 0.05 * tight.row(i)).normalized();
  Matrix spread = Matrix::Zero(5, 6);
  for (int i = 0; i < 5; ++i) spread(i, i) = 1.0;
  CHECK(density_weight(tight) < density_weight(spread));
}

TEST_CASE("local mean is the plain coordinate average") {
  Matrix members(3, 2);
  members << 1, 0, 0, 1, 1, 1;
  const Vector mu = local_mean(members);
  CHECK(mu[0] == doctest::Approx(2.0 / 3.0));
  CHECK(mu[1] == doctest::Approx(2.0 / 3.0));
  CHECK(mu.norm() < 1.0);  // not renormalized
}

TEST_CASE("balanced loss: hand case with a perfectly aligned batch") {
  // Snapshot: three identical points and one orthogonal outlier. Sample 0's
  // neighborhood (K = 2) is {0, 1, 2}, all identical: w = -1, so the term
  // (1 + w)(1 - sim) vanishes regardless of the live representation.
  Matrix snap(4, 2);
  snap << 1, 0, 1, 0, 1, 0, 0, 1;
  const NeighborhoodIndex idx = build_neighborhoods(snap, 2);

  Matrix z(1, 2);
  z << 0, 1;  // pointing away from the local mean on purpose
  const BalancedLossResult r = balanced_loss(z, {0}, idx, snap);
  CHECK(r.value == doctest::Approx(0.0));
  CHECK(r.grad.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(r.weights[0] == doctest::Approx(-1.0));
  CHECK(r.skipped.empty());
}

TEST_CASE("balanced loss: alignment with the local mean zeroes the term") {
  Rng rng(15);
  const Matrix snap = unit_rows(12, 4, rng);
  const NeighborhoodIndex idx = build_neighborhoods(snap, 3);

  // Live representation equal to the local mean direction: sim = 1.
  Matrix members(4, 4);
  members.row(0) = snap.row(5);
  for (int m = 0; m < 3; ++m) members.row(m + 1) = snap.row(idx.neighbors[5][m]);
  const Vector mu = local_mean(members);
  Matrix z(1, 4);
  z.row(0) = (2.0 * mu).transpose();  // scale must not matter
  const BalancedLossResult r = balanced_loss(z, {5}, idx, snap);
  CHECK(r.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("balanced loss matches a from-scratch recomputation") {
  Rng rng(21);
  const Matrix snap = unit_rows(30, 5, rng);
  const int K = 4;
  const NeighborhoodIndex idx = build_neighborhoods(snap, K);
  const Matrix z = unit_rows(6, 5, rng);
  const std::vector<int> ids = {2, 7, 11, 19, 23, 29};
  const BalancedLossResult r = balanced_loss(z, ids, idx, snap);

  double expect = 0.0;
  for (int i = 0; i < 6; ++i) {
    Matrix members(K + 1, 5);
    members.row(0) = snap.row(ids[i]);
    for (int m = 0; m < K; ++m)
      members.row(m + 1) = snap.row(idx.neighbors[ids[i]][m]);
    const double w = density_weight(members);
    const Vector mu = local_mean(members);
    expect += (1.0 + w) *
              (1.0 - cosine_sim(z.row(i).transpose(), mu)) / 6.0;
    CHECK(r.weights[i] == doctest::Approx(w).epsilon(1e-12));
    CHECK(1.0 + r.weights[i] >= 0.0);
    CHECK(1.0 + r.weights[i] <= 2.0);
  }
  CHECK(r.value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("balanced loss gradient matches finite differences") {
  Rng rng(33);
  const Matrix snap = unit_rows(20, 4, rng);
  const NeighborhoodIndex idx = build_neighborhoods(snap, 3);
  Matrix z = unit_rows(4, 4, rng);
  const std::vector<int> ids = {1, 6, 12, 18};
  const BalancedLossResult r = balanced_loss(z, ids, idx, snap);

  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index d = 0; d < z.cols(); ++d) {
      Matrix zp = z, zm = z;
      zp(i, d) += eps;
      zm(i, d) -= eps;
      const double fd = (balanced_loss(zp, ids, idx, snap).value -
                         balanced_loss(zm, ids, idx, snap).value) /
                        (2.0 * eps);
      CHECK(r.grad(i, d) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("degenerate local mean is skipped, not crashed") {
  // Sample 0's neighborhood (K = 1) pairs it with its exact antipode, so
  // the local mean is the zero vector.
  Matrix snap(4, 2);
  snap << 1, 0, -1, 0, 0, 1, 0.1, 1;
  const NeighborhoodIndex idx = build_neighborhoods(snap, 1);
  REQUIRE(idx.neighbors[2] == std::vector<int>{3});
  REQUIRE(idx.neighbors[0] == std::vector<int>{3});

  // Force the degenerate pairing by hand.
  NeighborhoodIndex forced = idx;
  forced.neighbors[0] = {1};
  Matrix z(2, 2);
  z << 0, 1, 1, 0;
  const BalancedLossResult r = balanced_loss(z, {0, 2}, forced, snap);
  CHECK(r.skipped == std::vector<int>{0});
  CHECK(std::isnan(r.weights[0]));
  CHECK(r.grad.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(std::isfinite(r.value));

  CHECK_THROWS_AS(balanced_loss(z, {0}, idx, snap), ConfigError);
  CHECK_THROWS_AS(balanced_loss(z, {0, 99}, idx, snap), ConfigError);
}
