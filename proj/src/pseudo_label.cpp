#include "ltgcd/pseudo_label.hpp"

#include <cmath>
#include <vector>

namespace ltgcd {

namespace {

// Row-wise log-sum-exp.
Vector lse_rows(const Matrix& a) {
  Vector out(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double m = a.row(i).maxCoeff();
    out[i] = m + std::log((a.row(i).array() - m).exp().sum());
  }
  return out;
}

Vector lse_cols(const Matrix& a) {
  Vector out(a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double m = a.col(j).maxCoeff();
    out[j] = m + std::log((a.col(j).array() - m).exp().sum());
  }
  return out;
}

Matrix log_kernel(const Matrix& queue_probs, double eps_reg) {
  require(eps_reg > 0.0, "sinkhorn regularizer must be positive");
  require(queue_probs.rows() > 0 && queue_probs.cols() > 0,
          "sinkhorn queue must be non-empty");
  if ((queue_probs.array() <= 0.0).any())
    throw NumericalError("sinkhorn requires strictly positive queue entries");
  return (queue_probs.array().log() / eps_reg).matrix();
}

void check_pi(const Vector& pi) {
  if ((pi.array() <= 0.0).any())
    throw NumericalError("sinkhorn target distribution must be strictly positive");
}

}  // namespace

LearnableDistribution LearnableDistribution::from_pi(const Vector& pi) {
  check_pi(pi);
  LearnableDistribution d;
  d.raw = pi.array().log().matrix();
  return d;
}

Vector LearnableDistribution::pi() const {
  const double m = raw.maxCoeff();
  Eigen::ArrayXd e = (raw.array() - m).exp();
  return (e / e.sum()).matrix();
}

Matrix sinkhorn_with_marginals(const Matrix& queue_probs, const Vector& pi,
                               const SinkhornOptions& opts,
                               SinkhornMarginals* marginals,
                               std::vector<double>* violation_trace) {
  const Eigen::Index N = queue_probs.rows();
  const Eigen::Index C = queue_probs.cols();
  require(pi.size() == C, "pi length must match queue columns");
  check_pi(pi);
  const Matrix logK = log_kernel(queue_probs, opts.eps_reg);
  const double log_r = -std::log(static_cast<double>(N));
  const Vector log_pi = pi.array().log();

  Vector f = Vector::Zero(N), g = Vector::Zero(C);
  if (violation_trace) violation_trace->clear();
  for (int t = 0; t < opts.iters; ++t) {
    f = (log_r - lse_rows(logK.rowwise() + g.transpose()).array()).matrix();
    g = (log_pi.array() - lse_cols(logK.colwise() + f).array()).matrix();
    if (violation_trace || (marginals && t == opts.iters - 1)) {
      const Matrix P = ((logK.colwise() + f).rowwise() + g.transpose())
                           .array()
                           .exp()
                           .matrix();
      const double row_v =
          ((P.rowwise().sum().array() * static_cast<double>(N)) - 1.0)
              .abs()
              .maxCoeff();
      const double col_v =
          (P.colwise().sum().transpose() - pi).array().abs().maxCoeff();
      if (violation_trace) violation_trace->push_back(std::max(row_v, col_v));
      if (marginals && t == opts.iters - 1) {
        marginals->row_violation = row_v;
        marginals->col_violation = col_v;
      }
    }
  }
  if (!f.allFinite() || !g.allFinite())
    throw NumericalError("sinkhorn scalings diverged");

  // Row rescale: f drops out, leaving a row softmax of logK + g.
  Matrix H(N, C);
  const Matrix scores = logK.rowwise() + g.transpose();
  for (Eigen::Index i = 0; i < N; ++i) {
    const double m = scores.row(i).maxCoeff();
    Eigen::ArrayXd e = (scores.row(i).array() - m).exp();
    H.row(i) = (e / e.sum()).matrix();
  }
  return H;
}

Matrix sinkhorn(const Matrix& queue_probs, const Vector& pi,
                const SinkhornOptions& opts) {
  return sinkhorn_with_marginals(queue_probs, pi, opts, nullptr);
}

double kl_divergence(const Vector& p, const Vector& q) {
  double kl = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c)
    if (p[c] > 0.0)
      kl += p[c] * (std::log(std::max(p[c], kEpsFloor)) -
                    std::log(std::max(q[c], kEpsFloor)));
  return kl;
}

GuidedLossResult guided_loss(const Matrix& queue_probs,
                             const LearnableDistribution& dist,
                             const Vector& pi_tilde, double beta,
                             const SinkhornOptions& opts) {
  const Eigen::Index N = queue_probs.rows();
  const Eigen::Index C = queue_probs.cols();
  const Vector pi = dist.pi();
  require(pi.size() == C && pi_tilde.size() == C,
          "distribution sizes must match queue columns");
  const Matrix logK = log_kernel(queue_probs, opts.eps_reg);
  const double log_r = -std::log(static_cast<double>(N));
  const Vector log_pi = pi.array().log();

  // Unrolled iterations; the per-iteration scalings are kept so the
  // backward sweep can rebuild the softmax factors without storing the
  // N x C intermediates.
  std::vector<Vector> g_hist(opts.iters + 1), f_hist(opts.iters);
  Vector f = Vector::Zero(N), g = Vector::Zero(C);
  g_hist[0] = g;
  for (int t = 0; t < opts.iters; ++t) {
    f = (log_r - lse_rows(logK.rowwise() + g.transpose()).array()).matrix();
    g = (log_pi.array() - lse_cols(logK.colwise() + f).array()).matrix();
    f_hist[t] = f;
    g_hist[t + 1] = g;
  }
  if (!f.allFinite() || !g.allFinite())
    throw NumericalError("sinkhorn scalings diverged");

  // Pseudo-labels: row softmax of logK + g; Jacobian via Jg.
  Matrix H(N, C);
  const Matrix scores = logK.rowwise() + g.transpose();
  for (Eigen::Index i = 0; i < N; ++i) {
    const double m = scores.row(i).maxCoeff();
    Eigen::ArrayXd e = (scores.row(i).array() - m).exp();
    H.row(i) = (e / e.sum()).matrix();
  }

  GuidedLossResult res;
  res.pseudo_labels = H;
  res.agreement = -(queue_probs.array() * H.array()).sum() / static_cast<double>(N);
  res.kl = kl_divergence(pi, pi_tilde);
  res.value = res.agreement + beta * res.kl;

  // dL1/dg_c = -(1/N) sum_i q_ic H_ic - (but softmax couples columns):
  // dH_ic/dg_d = H_ic (delta_cd - H_id); chain with dL1/dH_ic = -q_ic/N.
  Vector dL_dg = Vector::Zero(C);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double dot = queue_probs.row(i).dot(H.row(i));
    dL_dg += (-1.0 / static_cast<double>(N)) *
             (H.row(i).array() * (queue_probs.row(i).array() - dot))
                 .matrix()
                 .transpose();
  }
  // Reverse sweep through the unrolled iterations. Each g update adds its
  // adjoint to log pi directly; the softmax factors a_t (rows over C) and
  // b_t (columns over N) are rebuilt from the stored scalings.
  Vector dL_dlogpi = Vector::Zero(C);
  Vector bar_g = dL_dg;
  for (int t = opts.iters - 1; t >= 0; --t) {
    dL_dlogpi += bar_g;
    // b_ic = exp(logK_ic + f_t_i - log pi_c + g_{t+1}_c): softmax over i.
    const Vector gm = g_hist[t + 1] - log_pi;
    Matrix scores_b = logK;
    scores_b.colwise() += f_hist[t];
    scores_b.rowwise() += gm.transpose();
    Vector bar_f(N);
    for (Eigen::Index i = 0; i < N; ++i)
      bar_f[i] = -scores_b.row(i).array().exp().matrix().dot(bar_g);
    // a_ic = exp(logK_ic + g_t_c - log r + f_t_i): softmax over c.
    const Vector fr = f_hist[t] - Vector::Constant(N, log_r);
    Matrix scores_a = logK;
    scores_a.rowwise() += g_hist[t].transpose();
    scores_a.colwise() += fr;
    bar_g = Vector::Zero(C);
    for (Eigen::Index i = 0; i < N; ++i)
      bar_g -= bar_f[i] * scores_a.row(i).array().exp().matrix().transpose();
  }

  // KL term: dKL/dpi_c = log(pi_c / pi_tilde_c) + 1; dpi_c/dlogpi via the
  // softmax structure of pi itself is handled below in the raw chain.
  Vector dKL_dpi(C);
  for (Eigen::Index c = 0; c < C; ++c)
    dKL_dpi[c] = std::log(std::max(pi[c], kEpsFloor)) -
                 std::log(std::max(pi_tilde[c], kEpsFloor)) + 1.0;

  // Chain to raw parameters. pi = softmax(raw), log pi_c = raw_c - LSE(raw):
  // dlogpi_c/draw_b = delta_cb - pi_b; dpi_c/draw_b = pi_c (delta_cb - pi_b).
  Vector grad_raw = Vector::Zero(C);
  const double sum_dlogpi = dL_dlogpi.sum();
  const double sum_pi_dKL = pi.dot(dKL_dpi);
  for (Eigen::Index b = 0; b < C; ++b)
    grad_raw[b] = dL_dlogpi[b] - pi[b] * sum_dlogpi +
                  beta * pi[b] * (dKL_dpi[b] - sum_pi_dKL);
  res.grad_raw = grad_raw;
  return res;
}

Vector guided_loss_fd_grad(const Matrix& queue_probs,
                           const LearnableDistribution& dist,
                           const Vector& pi_tilde, double beta,
                           const SinkhornOptions& opts, double fd_eps) {
  Vector grad(dist.raw.size());
  LearnableDistribution d = dist;
  for (Eigen::Index b = 0; b < d.raw.size(); ++b) {
    d.raw[b] = dist.raw[b] + fd_eps;
    Matrix Hp = sinkhorn(queue_probs, d.pi(), opts);
    const double fp =
        -(queue_probs.array() * Hp.array()).sum() / queue_probs.rows() +
        beta * kl_divergence(d.pi(), pi_tilde);
    d.raw[b] = dist.raw[b] - fd_eps;
    Matrix Hm = sinkhorn(queue_probs, d.pi(), opts);
    const double fm =
        -(queue_probs.array() * Hm.array()).sum() / queue_probs.rows() +
        beta * kl_divergence(d.pi(), pi_tilde);
    d.raw[b] = dist.raw[b];
    grad[b] = (fp - fm) / (2.0 * fd_eps);
  }
  return grad;
}

void update_distribution(LearnableDistribution& dist, const Vector& grad_raw,
                         double lr) {
  require(grad_raw.size() == dist.raw.size(), "gradient size mismatch");
  if (!grad_raw.allFinite())
    throw NumericalError("non-finite gradient for the learnable distribution");
  dist.raw -= lr * grad_raw;
  if (!dist.raw.allFinite())
    throw NumericalError("learnable distribution update diverged");
}

}  // namespace ltgcd
