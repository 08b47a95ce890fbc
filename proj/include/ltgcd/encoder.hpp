#pragma once

#include <functional>
#include <vector>

#include "ltgcd/core.hpp"

namespace ltgcd {

struct EncoderConfig {
  int in_dim = 0;
  int hidden = 32;
  int num_classes = 0;
  int rep_dim = 16;
};

// One-hidden-layer encoder: v = tanh(W1 x + b1), q = softmax(Wc v + bc),
// z = normalize(Wp v + bp).
struct EncoderParams {
  Matrix W1;
  Vector b1;
  Matrix Wc;
  Vector bc;
  Matrix Wp;
  Vector bp;

  static EncoderParams init(const EncoderConfig& cfg, Rng& rng,
                            double scale = 0.2);
  static EncoderParams zeros(const EncoderConfig& cfg);

  EncoderConfig config() const;
  Eigen::Index param_count() const;
  Vector to_vector() const;
  void from_vector(const Eigen::Ref<const Vector>& flat);
};

struct ForwardCache {
  Matrix x;       // B x d input
  Matrix v;       // B x h hidden features (post-activation)
  Matrix q;       // B x C simplex rows
  Matrix p_raw;   // B x dz pre-normalization projections
  Matrix z;       // B x dz unit-norm rows
};

ForwardCache forward(const EncoderParams& p, const Matrix& batch);

// Backward pass from loss gradients dL/dq and dL/dz (either may be empty).
// Returns gradients with the same shapes as the parameters.
EncoderParams backward(const EncoderParams& p, const ForwardCache& cache,
                       const Matrix& dLdq, const Matrix& dLdz);

// In-place SGD step: p -= lr * g.
void sgd_step(EncoderParams& p, const EncoderParams& g, double lr);

// EMA update: ema <- m * ema + (1 - m) * online, elementwise.
void momentum_update(const EncoderParams& online, EncoderParams& ema, double m);

// Fixed-capacity FIFO of momentum outputs. Labels hold -1 for unlabeled
// entries so supervised contrastive positives can be looked up by slot.
class QueuePair {
 public:
  QueuePair() = default;
  QueuePair(int capacity, int num_classes, int rep_dim);

  // Appends rows, evicting the oldest when full. Returns the slot each row
  // landed in.
  std::vector<int> enqueue(const Matrix& q_rows, const Matrix& z_rows,
                           const std::vector<int>& labels);

  bool full() const { return size_ == capacity_; }
  int size() const { return size_; }
  int capacity() const { return capacity_; }
  const Matrix& probs() const { return probs_; }
  const Matrix& reps() const { return reps_; }
  const std::vector<int>& labels() const { return labels_; }

  // Occupied rows in storage order (only meaningful before the queue fills).
  Matrix occupied_probs() const;
  Matrix occupied_reps() const;

  void serialize(std::ostream& os) const;
  static QueuePair deserialize(std::istream& is);

 private:
  Matrix probs_;
  Matrix reps_;
  std::vector<int> labels_;
  int capacity_ = 0;
  int size_ = 0;
  int cursor_ = 0;
};

// Central-difference gradient check. f maps a flat parameter vector to a
// loss value; grad is the analytic gradient at x0. Returns the max over
// coordinates of |analytic - numeric| / (|numeric| + 1e-8).
double grad_check(const std::function<double(const Vector&)>& f,
                  const Vector& x0, const Vector& grad, double eps = 1e-5);

}  // namespace ltgcd
