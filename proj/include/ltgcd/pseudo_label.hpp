#pragma once

#include "ltgcd/core.hpp"

namespace ltgcd {

// Target class distribution with raw (unconstrained) size parameters.
// pi = exp(raw) / sum exp(raw), so pi stays interior to the simplex.
struct LearnableDistribution {
  Vector raw;

  static LearnableDistribution from_pi(const Vector& pi);
  Vector pi() const;
  int num_classes() const { return static_cast<int>(raw.size()); }
};

struct SinkhornOptions {
  int iters = 100;
  double eps_reg = 0.2;
};

// Transport plan diagnostics from the unrescaled plan P (row marginal
// 1/N, column marginal pi). Violations are max-abs deviations, with the
// row side scaled by N so both are order-1 quantities.
struct SinkhornMarginals {
  double row_violation = 0.0;
  double col_violation = 0.0;
};

// Log-domain Sinkhorn-Knopp on the queue probabilities. Returns H with
// rows rescaled to sum 1; column sums approximate N * pi_c.
Matrix sinkhorn(const Matrix& queue_probs, const Vector& pi,
                const SinkhornOptions& opts = {});

// As above but also reports marginal violations of the final plan, and
// optionally the per-iteration total violation trace.
Matrix sinkhorn_with_marginals(const Matrix& queue_probs, const Vector& pi,
                               const SinkhornOptions& opts,
                               SinkhornMarginals* marginals,
                               std::vector<double>* violation_trace = nullptr);

struct GuidedLossResult {
  double value = 0.0;
  double agreement = 0.0;  // -(1/N) sum q'_ik h_ik
  double kl = 0.0;         // KL(pi || pi_tilde)
  Vector grad_raw;         // d value / d raw size parameters
  Matrix pseudo_labels;    // H used for the loss
};

// Guided loss: -(1/N) sum q' . H(pi, Q') + beta * KL(pi || pi_tilde).
// The gradient w.r.t. the raw size parameters flows through the unrolled
// Sinkhorn iterations (reverse-mode adjoint sweep over the scalings).
GuidedLossResult guided_loss(const Matrix& queue_probs,
                             const LearnableDistribution& dist,
                             const Vector& pi_tilde, double beta,
                             const SinkhornOptions& opts = {});

// Same value via finite differences over the raw parameters; cross-check
// oracle for the analytic path.
Vector guided_loss_fd_grad(const Matrix& queue_probs,
                           const LearnableDistribution& dist,
                           const Vector& pi_tilde, double beta,
                           const SinkhornOptions& opts = {},
                           double fd_eps = 1e-6);

// Gradient step on the raw parameters; throws on a non-finite update.
void update_distribution(LearnableDistribution& dist, const Vector& grad_raw,
                         double lr);

// KL(p || q) with the epsilon floor.
double kl_divergence(const Vector& p, const Vector& q);

}  // namespace ltgcd
