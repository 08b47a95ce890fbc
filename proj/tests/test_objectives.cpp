#include <cmath>
#include <vector>

#include "doctest.h"
#include "ltgcd/core.hpp"
#include "ltgcd/objectives.hpp"

using namespace ltgcd;

namespace {

Matrix random_simplex_rows(int n, int c, Rng& rng) {
  Matrix m(n, c);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = 0.05 + rng.uniform();
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

Matrix unit_rows(int n, int d, Rng& rng) {
  Matrix m = rng.gaussian_matrix(n, d);
  for (int i = 0; i < n; ++i) m.row(i).normalize();
  return m;
}

// Central-difference gradient of a scalar function of a matrix argument.
template <typename F>
Matrix fd_grad(const Matrix& x, F value, double eps = 1e-6) {
  Matrix g(x.rows(), x.cols());
  Matrix xp = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      xp(i, j) = x(i, j) + eps;
      const double fp = value(xp);
      xp(i, j) = x(i, j) - eps;
      const double fm = value(xp);
      xp(i, j) = x(i, j);
      g(i, j) = (fp - fm) / (2.0 * eps);
    }
  return g;
}

}  // namespace

TEST_CASE("soft cross entropy: hand values and gradient entries") {
  // One-hot target against a uniform 4-way prediction: loss = log 4, and
  // the gradient is -1/q = -4 at the hot entry only.
  Matrix q = Matrix::Constant(1, 4, 0.25);
  Matrix h = Matrix::Zero(1, 4);
  h(0, 2) = 1.0;
  const LossResult r = cls_unsup(q, h);
  CHECK(r.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(r.grad(0, 2) == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(r.grad(0, 0) == 0.0);
  CHECK(r.grad(0, 1) == 0.0);
  CHECK(r.grad(0, 3) == 0.0);
  CHECK_THROWS_AS(cls_unsup(q, Matrix::Zero(2, 4)), ConfigError);
}

TEST_CASE("soft cross entropy is bounded below by the target entropy") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix q = random_simplex_rows(6, 5, rng);
    const Matrix h = random_simplex_rows(6, 5, rng);
    double entropy = 0.0;
    for (Eigen::Index i = 0; i < h.rows(); ++i)
      for (Eigen::Index c = 0; c < h.cols(); ++c)
        entropy -= h(i, c) * std::log(h(i, c)) / h.rows();
    CHECK(cls_unsup(q, h).value >= entropy - 1e-12);
    // Equality exactly when q == h.
    CHECK(cls_unsup(h, h).value == doctest::Approx(entropy).epsilon(1e-10));
  }
}

TEST_CASE("labeled cross entropy: hand value, empty input, bad labels") {
  Matrix q(2, 3);
  q << 0.5, 0.25, 0.25, 0.1, 0.8, 0.1;
  const LossResult r = cls_sup(q, {0, 1});
  CHECK(r.value ==
        doctest::Approx(0.5 * (std::log(2.0) - std::log(0.8))).epsilon(1e-12));
  CHECK(r.grad(0, 0) == doctest::Approx(-1.0 / (0.5 * 2.0)).epsilon(1e-12));
  CHECK(r.grad(0, 1) == 0.0);

  const LossResult empty = cls_sup(Matrix(0, 3), {});
  CHECK(empty.value == 0.0);
  CHECK_THROWS_AS(cls_sup(q, {0, 7}), ConfigError);
  CHECK_THROWS_AS(cls_sup(q, {0}), ConfigError);
}

TEST_CASE("loss mixing weights") {
  CHECK(cls_total(1.0, 2.0, 1.2, 0.35) ==
        doctest::Approx(0.65 + 0.7 + 1.2).epsilon(1e-12));
  CHECK(rep_total(1.0, 2.0, 0.35) == doctest::Approx(0.65 + 0.7).epsilon(1e-12));
  // lambda = 0 drops the supervised terms entirely.
  CHECK(cls_total(3.0, 99.0, 0.5, 0.0) == doctest::Approx(3.5));
  CHECK(rep_total(3.0, 99.0, 0.0) == doctest::Approx(3.0));
}

TEST_CASE("contrastive loss: hand value with one orthogonal negative") {
  // Anchor aligned with its positive, one orthogonal negative, tau = 1:
  // loss = log(e + 1) - 1 = log(1 + 1/e) = 0.31326168751822286.
  Matrix z(1, 2), zp(1, 2), queue(1, 2);
  z << 1, 0;
  zp << 1, 0;
  queue << 0, 1;
  const LossResult r = rep_unsup(z, zp, queue, 1.0);
  CHECK(r.value == doctest::Approx(0.31326168751822286).epsilon(1e-12));

  // Lower temperature sharpens the same geometry: loss falls.
  CHECK(rep_unsup(z, zp, queue, 0.1).value < r.value);
  CHECK_THROWS_AS(rep_unsup(z, zp, queue, 0.0), ConfigError);
  CHECK_THROWS_AS(rep_unsup(z, zp, Matrix::Zero(1, 3), 1.0), ConfigError);
}

TEST_CASE("contrastive loss: own-slot exclusion equals removing the row") {
  Rng rng(7);
  const int B = 3, N = 6, d = 4;
  const Matrix z = unit_rows(B, d, rng);
  const Matrix zp = unit_rows(B, d, rng);
  Matrix queue = unit_rows(N, d, rng);
  // Each anchor's own entry sits at slot i; excluding it must match a
  // queue that simply lacks that row.
  for (int i = 0; i < B; ++i) queue.row(i) = zp.row(i);
  const std::vector<int> own = {0, 1, 2};
  const LossResult with_skip = rep_unsup(z, zp, queue, 0.5, own);

  // The batch value is the mean of per-anchor losses computed over queues
  // with the anchor's own row removed.
  double mean_single = 0.0;
  for (int i = 0; i < B; ++i) {
    Matrix reduced(N - 1, d);
    int r = 0;
    for (int j = 0; j < N; ++j)
      if (j != i) reduced.row(r++) = queue.row(j);
    mean_single += rep_unsup(z.row(i), zp.row(i), reduced, 0.5).value / B;
  }
  CHECK(with_skip.value == doctest::Approx(mean_single).epsilon(1e-12));
  // Keeping the duplicate entry among the negatives raises the loss.
  CHECK(rep_unsup(z, zp, queue, 0.5).value > with_skip.value);
}

TEST_CASE("contrastive loss: queue order does not change the value") {
  Rng rng(11);
  const Matrix z = unit_rows(4, 5, rng);
  const Matrix zp = unit_rows(4, 5, rng);
  const Matrix queue = unit_rows(7, 5, rng);
  Matrix shuffled(7, 5);
  const int perm[7] = {3, 0, 6, 1, 5, 2, 4};
  for (int j = 0; j < 7; ++j) shuffled.row(j) = queue.row(perm[j]);
  CHECK(rep_unsup(z, zp, queue, 0.2).value ==
        doctest::Approx(rep_unsup(z, zp, shuffled, 0.2).value).epsilon(1e-12));
}

TEST_CASE("contrastive gradient matches finite differences") {
  Rng rng(13);
  const Matrix z = unit_rows(3, 4, rng);
  const Matrix zp = unit_rows(3, 4, rng);
  const Matrix queue = unit_rows(8, 4, rng);
  const LossResult r = rep_unsup(z, zp, queue, 0.3);
  const Matrix fd = fd_grad(
      z, [&](const Matrix& zz) { return rep_unsup(zz, zp, queue, 0.3).value; });
  CHECK((r.grad - fd).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("supervised contrastive: hand value with one positive") {
  // Anchor e1, queue holds the positive e1 (same label) and a distractor
  // e2: identical structure to the plain case, loss = log(1 + 1/e).
  Matrix z(1, 2), queue(2, 2);
  z << 1, 0;
  queue << 1, 0, 0, 1;
  const LossResult r = rep_sup(z, {0}, queue, {0, 1}, 1.0);
  CHECK(r.value == doctest::Approx(0.31326168751822286).epsilon(1e-12));
}

TEST_CASE("supervised contrastive: anchors without positives are excluded") {
  Rng rng(17);
  Matrix z = unit_rows(2, 3, rng);
  const Matrix queue = unit_rows(4, 3, rng);
  const std::vector<int> qlab = {0, 0, 1, 1};

  // Second anchor's label never appears in the queue; the batch value must
  // equal the first anchor evaluated alone.
  const LossResult both = rep_sup(z, {0, 9}, queue, qlab, 0.4);
  const LossResult solo = rep_sup(z.topRows(1), {0}, queue, qlab, 0.4);
  CHECK(both.value == doctest::Approx(solo.value).epsilon(1e-12));
  CHECK(both.grad.row(1).cwiseAbs().maxCoeff() == 0.0);

  // No anchor has a positive: zero loss, zero gradient.
  const LossResult none = rep_sup(z, {9, 9}, queue, qlab, 0.4);
  CHECK(none.value == 0.0);
  CHECK(none.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("supervised contrastive gradient matches finite differences") {
  Rng rng(19);
  const Matrix z = unit_rows(3, 4, rng);
  const Matrix queue = unit_rows(10, 4, rng);
  const std::vector<int> labels = {0, 1, 0};
  const std::vector<int> qlab = {0, 1, 0, 2, 1, 0, 2, 1, 0, 2};
  const LossResult r = rep_sup(z, labels, queue, qlab, 0.25);
  const Matrix fd = fd_grad(z, [&](const Matrix& zz) {
    return rep_sup(zz, labels, queue, qlab, 0.25).value;
  });
  CHECK((r.grad - fd).cwiseAbs().maxCoeff() < 1e-6);
}
