#include "ltgcd/objectives.hpp"

#include <cmath>

namespace ltgcd {

LossResult cls_unsup(const Matrix& q, const Matrix& h) {
  require(q.rows() == h.rows() && q.cols() == h.cols(),
          "cls_unsup shape mismatch");
  const double B = static_cast<double>(q.rows());
  LossResult res;
  res.grad = Matrix::Zero(q.rows(), q.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index k = 0; k < q.cols(); ++k) {
      const double qc = std::max(q(i, k), kEpsFloor);
      res.value -= h(i, k) * std::log(qc) / B;
      res.grad(i, k) = -h(i, k) / qc / B;
    }
  return res;
}

LossResult cls_sup(const Matrix& q_labeled, const std::vector<int>& labels) {
  require(q_labeled.rows() == static_cast<Eigen::Index>(labels.size()),
          "cls_sup label count mismatch");
  LossResult res;
  res.grad = Matrix::Zero(q_labeled.rows(), q_labeled.cols());
  if (labels.empty()) return res;
  const double B = static_cast<double>(labels.size());
  for (Eigen::Index i = 0; i < q_labeled.rows(); ++i) {
    const int y = labels[i];
    require(y >= 0 && y < q_labeled.cols(), "cls_sup label out of range");
    const double qc = std::max(q_labeled(i, y), kEpsFloor);
    res.value -= std::log(qc) / B;
    res.grad(i, y) = -1.0 / qc / B;
  }
  return res;
}

double cls_total(double loss_unsup, double loss_sup, double loss_guided,
                 double lambda) {
  return (1.0 - lambda) * loss_unsup + lambda * loss_sup + loss_guided;
}

LossResult rep_unsup(const Matrix& z, const Matrix& z_pos,
                     const Matrix& queue_reps, double tau,
                     const std::vector<int>& own_slot) {
  require(z.rows() == z_pos.rows() && z.cols() == z_pos.cols(),
          "rep_unsup positive shape mismatch");
  require(queue_reps.cols() == z.cols(), "rep_unsup queue dim mismatch");
  require(tau > 0.0, "temperature must be positive");
  const Eigen::Index B = z.rows();
  const Eigen::Index N = queue_reps.rows();
  LossResult res;
  res.grad = Matrix::Zero(B, z.cols());
  for (Eigen::Index i = 0; i < B; ++i) {
    const int skip =
        own_slot.empty() ? -1 : own_slot[static_cast<std::size_t>(i)];
    const double l_pos = z.row(i).dot(z_pos.row(i)) / tau;
    double mx = l_pos;
    Vector l_neg(N);
    for (Eigen::Index j = 0; j < N; ++j) {
      l_neg[j] = (j == skip) ? -std::numeric_limits<double>::infinity()
                             : z.row(i).dot(queue_reps.row(j)) / tau;
      mx = std::max(mx, l_neg[j]);
    }
    double denom = std::exp(l_pos - mx);
    for (Eigen::Index j = 0; j < N; ++j)
      if (j != skip) denom += std::exp(l_neg[j] - mx);
    const double log_denom = mx + std::log(denom);
    res.value += (log_denom - l_pos) / B;

    // d/dz_i: (p_pos - 1) z_pos / tau + sum_j p_j queue_j / tau.
    const double p_pos = std::exp(l_pos - log_denom);
    Eigen::RowVectorXd g = (p_pos - 1.0) * z_pos.row(i);
    for (Eigen::Index j = 0; j < N; ++j)
      if (j != skip) g += std::exp(l_neg[j] - log_denom) * queue_reps.row(j);
    res.grad.row(i) = g / (tau * B);
  }
  return res;
}

LossResult rep_sup(const Matrix& z_labeled, const std::vector<int>& labels,
                   const Matrix& queue_reps,
                   const std::vector<int>& queue_labels, double tau,
                   const std::vector<int>& own_slot) {
  require(z_labeled.rows() == static_cast<Eigen::Index>(labels.size()),
          "rep_sup label count mismatch");
  require(queue_reps.rows() == static_cast<Eigen::Index>(queue_labels.size()),
          "rep_sup queue label count mismatch");
  require(tau > 0.0, "temperature must be positive");
  const Eigen::Index N = queue_reps.rows();
  LossResult res;
  res.grad = Matrix::Zero(z_labeled.rows(), z_labeled.cols());
  int counted = 0;
  Matrix grads = Matrix::Zero(z_labeled.rows(), z_labeled.cols());
  Vector values = Vector::Zero(z_labeled.rows());

  for (Eigen::Index i = 0; i < z_labeled.rows(); ++i) {
    const int skip =
        own_slot.empty() ? -1 : own_slot[static_cast<std::size_t>(i)];
    std::vector<Eigen::Index> positives;
    for (Eigen::Index j = 0; j < N; ++j)
      if (j != skip && queue_labels[j] == labels[i]) positives.push_back(j);
    if (positives.empty()) continue;
    ++counted;

    Vector logits(N);
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < N; ++j) {
      logits[j] = (j == skip) ? -std::numeric_limits<double>::infinity()
                              : z_labeled.row(i).dot(queue_reps.row(j)) / tau;
      mx = std::max(mx, logits[j]);
    }
    double denom = 0.0;
    for (Eigen::Index j = 0; j < N; ++j)
      if (j != skip) denom += std::exp(logits[j] - mx);
    const double log_denom = mx + std::log(denom);

    const double inv_p = 1.0 / static_cast<double>(positives.size());
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(z_labeled.cols());
    for (Eigen::Index p : positives) {
      values[i] += (log_denom - logits[p]) * inv_p;
      g -= inv_p * queue_reps.row(p);
    }
    for (Eigen::Index j = 0; j < N; ++j)
      if (j != skip) g += std::exp(logits[j] - log_denom) * queue_reps.row(j);
    grads.row(i) = g / tau;
  }

  if (counted == 0) return res;
  res.value = values.sum() / counted;
  res.grad = grads / counted;
  return res;
}

double rep_total(double loss_unsup, double loss_sup, double lambda) {
  return (1.0 - lambda) * loss_unsup + lambda * loss_sup;
}

}  // namespace ltgcd
