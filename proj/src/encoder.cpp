#include "ltgcd/encoder.hpp"

#include <cmath>

namespace ltgcd {

EncoderParams EncoderParams::init(const EncoderConfig& cfg, Rng& rng,
                                  double scale) {
  EncoderParams p;
  p.W1 = rng.gaussian_matrix(cfg.hidden, cfg.in_dim, scale);
  p.b1 = Vector::Zero(cfg.hidden);
  p.Wc = rng.gaussian_matrix(cfg.num_classes, cfg.hidden, scale);
  p.bc = Vector::Zero(cfg.num_classes);
  p.Wp = rng.gaussian_matrix(cfg.rep_dim, cfg.hidden, scale);
  p.bp = Vector::Zero(cfg.rep_dim);
  return p;
}

EncoderParams EncoderParams::zeros(const EncoderConfig& cfg) {
  EncoderParams p;
  p.W1 = Matrix::Zero(cfg.hidden, cfg.in_dim);
  p.b1 = Vector::Zero(cfg.hidden);
  p.Wc = Matrix::Zero(cfg.num_classes, cfg.hidden);
  p.bc = Vector::Zero(cfg.num_classes);
  p.Wp = Matrix::Zero(cfg.rep_dim, cfg.hidden);
  p.bp = Vector::Zero(cfg.rep_dim);
  return p;
}

EncoderConfig EncoderParams::config() const {
  EncoderConfig cfg;
  cfg.in_dim = static_cast<int>(W1.cols());
  cfg.hidden = static_cast<int>(W1.rows());
  cfg.num_classes = static_cast<int>(Wc.rows());
  cfg.rep_dim = static_cast<int>(Wp.rows());
  return cfg;
}

Eigen::Index EncoderParams::param_count() const {
  return W1.size() + b1.size() + Wc.size() + bc.size() + Wp.size() + bp.size();
}

Vector EncoderParams::to_vector() const {
  Vector flat(param_count());
  Eigen::Index off = 0;
  auto put = [&](const auto& m) {
    flat.segment(off, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    off += m.size();
  };
  put(W1); put(b1); put(Wc); put(bc); put(Wp); put(bp);
  return flat;
}

void EncoderParams::from_vector(const Eigen::Ref<const Vector>& flat) {
  Eigen::Index off = 0;
  auto take = [&](auto& m) {
    Eigen::Map<Vector>(m.data(), m.size()) = flat.segment(off, m.size());
    off += m.size();
  };
  take(W1); take(b1); take(Wc); take(bc); take(Wp); take(bp);
}

ForwardCache forward(const EncoderParams& p, const Matrix& batch) {
  require_finite(batch, "encoder input");
  ForwardCache c;
  c.x = batch;
  c.v = ((batch * p.W1.transpose()).rowwise() + p.b1.transpose())
            .array()
            .tanh()
            .matrix();

  Matrix logits = (c.v * p.Wc.transpose()).rowwise() + p.bc.transpose();
  c.q.resizeLike(logits);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
    c.q.row(i) = (e / e.sum()).matrix();
  }

  c.p_raw = (c.v * p.Wp.transpose()).rowwise() + p.bp.transpose();
  c.z.resizeLike(c.p_raw);
  for (Eigen::Index i = 0; i < c.p_raw.rows(); ++i) {
    const double n = c.p_raw.row(i).norm();
    if (n < 1e-30)
      throw NumericalError("projection collapsed to zero; cannot normalize");
    c.z.row(i) = c.p_raw.row(i) / n;
  }
  return c;
}

EncoderParams backward(const EncoderParams& p, const ForwardCache& cache,
                       const Matrix& dLdq, const Matrix& dLdz) {
  const Eigen::Index B = cache.x.rows();
  Matrix dv = Matrix::Zero(B, cache.v.cols());
  EncoderParams g = EncoderParams::zeros(p.config());

  if (dLdq.size() > 0) {
    // Softmax Jacobian: dlogits = q .* (dLdq - (dLdq . q) 1).
    Matrix dlogits(B, dLdq.cols());
    for (Eigen::Index i = 0; i < B; ++i) {
      const double dot = dLdq.row(i).dot(cache.q.row(i));
      dlogits.row(i) = cache.q.row(i).cwiseProduct(
          (dLdq.row(i).array() - dot).matrix());
    }
    g.Wc = dlogits.transpose() * cache.v;
    g.bc = dlogits.colwise().sum().transpose();
    dv += dlogits * p.Wc;
  }

  if (dLdz.size() > 0) {
    // Normalization Jacobian: dp_raw = (dLdz - (dLdz . z) z) / ||p_raw||.
    Matrix dp(B, dLdz.cols());
    for (Eigen::Index i = 0; i < B; ++i) {
      const double n = cache.p_raw.row(i).norm();
      const double dot = dLdz.row(i).dot(cache.z.row(i));
      dp.row(i) = (dLdz.row(i) - dot * cache.z.row(i)) / n;
    }
    g.Wp = dp.transpose() * cache.v;
    g.bp = dp.colwise().sum().transpose();
    dv += dp * p.Wp;
  }

  // tanh' = 1 - v^2.
  Matrix da = dv.cwiseProduct((1.0 - cache.v.array().square()).matrix());
  g.W1 = da.transpose() * cache.x;
  g.b1 = da.colwise().sum().transpose();
  return g;
}

void sgd_step(EncoderParams& p, const EncoderParams& g, double lr) {
  p.W1 -= lr * g.W1;
  p.b1 -= lr * g.b1;
  p.Wc -= lr * g.Wc;
  p.bc -= lr * g.bc;
  p.Wp -= lr * g.Wp;
  p.bp -= lr * g.bp;
}

void momentum_update(const EncoderParams& online, EncoderParams& ema, double m) {
  require(m >= 0.0 && m <= 1.0, "momentum coefficient must lie in [0,1]");
  // Delta form keeps entries that already match the online value bitwise
  // unchanged, so repeated updates at a fixed point never drift.
  auto blend = [m](auto& e, const auto& o) {
    if (m == 0.0) {
      e = o;
    } else {
      e += (1.0 - m) * (o - e);
    }
  };
  blend(ema.W1, online.W1);
  blend(ema.b1, online.b1);
  blend(ema.Wc, online.Wc);
  blend(ema.bc, online.bc);
  blend(ema.Wp, online.Wp);
  blend(ema.bp, online.bp);
}

QueuePair::QueuePair(int capacity, int num_classes, int rep_dim)
    : probs_(Matrix::Zero(capacity, num_classes)),
      reps_(Matrix::Zero(capacity, rep_dim)),
      labels_(capacity, -1),
      capacity_(capacity) {}

std::vector<int> QueuePair::enqueue(const Matrix& q_rows, const Matrix& z_rows,
                                    const std::vector<int>& labels) {
  require(q_rows.rows() == z_rows.rows() &&
              q_rows.rows() == static_cast<Eigen::Index>(labels.size()),
          "enqueue row counts disagree");
  require(q_rows.cols() == probs_.cols() && z_rows.cols() == reps_.cols(),
          "enqueue row shapes disagree");
  std::vector<int> slots(labels.size());
  for (Eigen::Index i = 0; i < q_rows.rows(); ++i) {
    probs_.row(cursor_) = q_rows.row(i);
    reps_.row(cursor_) = z_rows.row(i);
    labels_[cursor_] = labels[i];
    slots[i] = cursor_;
    cursor_ = (cursor_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
  }
  return slots;
}

Matrix QueuePair::occupied_probs() const { return probs_.topRows(size_); }
Matrix QueuePair::occupied_reps() const { return reps_.topRows(size_); }

namespace {

void write_i32(std::ostream& os, std::int32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::int32_t read_i32(std::istream& is) {
  std::int32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_mat(std::ostream& os, const Matrix& m) {
  write_i32(os, static_cast<std::int32_t>(m.rows()));
  write_i32(os, static_cast<std::int32_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix read_mat(std::istream& is) {
  const auto rows = read_i32(is);
  const auto cols = read_i32(is);
  Matrix m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  return m;
}

}  // namespace

void QueuePair::serialize(std::ostream& os) const {
  write_i32(os, capacity_);
  write_i32(os, size_);
  write_i32(os, cursor_);
  write_mat(os, probs_);
  write_mat(os, reps_);
  for (int y : labels_) write_i32(os, y);
}

QueuePair QueuePair::deserialize(std::istream& is) {
  QueuePair q;
  q.capacity_ = read_i32(is);
  q.size_ = read_i32(is);
  q.cursor_ = read_i32(is);
  q.probs_ = read_mat(is);
  q.reps_ = read_mat(is);
  q.labels_.resize(q.capacity_);
  for (auto& y : q.labels_) y = read_i32(is);
  return q;
}

double grad_check(const std::function<double(const Vector&)>& f,
                  const Vector& x0, const Vector& grad, double eps) {
  double max_rel = 0.0;
  Vector x = x0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    x[i] = x0[i] + eps;
    const double fp = f(x);
    x[i] = x0[i] - eps;
    const double fm = f(x);
    x[i] = x0[i];
    const double numeric = (fp - fm) / (2.0 * eps);
    const double rel = std::abs(grad[i] - numeric) / (std::abs(numeric) + 1e-8);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace ltgcd
