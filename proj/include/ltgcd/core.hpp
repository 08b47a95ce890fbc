#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace ltgcd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Floor applied inside every log/KL computation.
inline constexpr double kEpsFloor = 1e-12;

// Error taxonomy; the CLI maps these onto exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG wrapper. All randomness in the pipeline flows through
// one of these, seeded explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double normal() { return normal_(gen_); }
  double uniform() { return uniform_(gen_); }
  // Uniform integer in [0, n).
  std::int64_t index(std::int64_t n) {
    return std::uniform_int_distribution<std::int64_t>(0, n - 1)(gen_);
  }

  Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols,
                         double stddev = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stddev * normal();
    return m;
  }

  std::mt19937_64& engine() { return gen_; }

  // Text round-trip of the full generator state (engine + cached draws).
  void save(std::ostream& os) const { os << gen_ << ' ' << normal_ << ' ' << uniform_; }
  void load(std::istream& is) { is >> gen_ >> normal_ >> uniform_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

inline void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw NumericalError("non-finite values in " + what);
}

// Cosine similarity between two vectors; throws on a zero-norm operand.
inline double cosine_sim(const Eigen::Ref<const Vector>& a,
                         const Eigen::Ref<const Vector>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0)
    throw NumericalError("cosine similarity undefined for zero-norm vector");
  return a.dot(b) / (na * nb);
}

}  // namespace ltgcd
