#include "ltgcd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace ltgcd {

namespace {

constexpr char kMagic[4] = {'L', 'T', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("dataset file truncated");
  return v;
}

void write_matrix(std::ostream& os, const Matrix& m) {
  write_pod<std::int64_t>(os, m.rows());
  write_pod<std::int64_t>(os, m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) write_pod<double>(os, m(i, j));
}

Matrix read_matrix(std::istream& is) {
  const auto rows = read_pod<std::int64_t>(is);
  const auto cols = read_pod<std::int64_t>(is);
  if (rows < 0 || cols < 0 || rows > (1ll << 32) || cols > (1ll << 32))
    throw IoError("dataset file has implausible matrix dimensions");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = read_pod<double>(is);
  return m;
}

// Class means at pairwise distance >= sep: random directions on a sphere
// whose radius grows until the constraint holds. Deterministic in rng.
Matrix place_means(int num_classes, int dim, double sep, Rng& rng) {
  // Directions are kept apart on the unit sphere (chord distance >= 0.5)
  // so that scaling to the requested Euclidean separation also yields
  // angular separation; both distance- and cosine-based consumers then
  // see the same cluster structure.
  constexpr double kMinChord = 0.5;
  Matrix dirs(num_classes, dim);
  for (int c = 0; c < num_classes; ++c) {
    for (int attempt = 0;; ++attempt) {
      Vector v = rng.gaussian_matrix(dim, 1);
      if (v.norm() < 1e-8) continue;
      v /= v.norm();
      bool ok = true;
      for (int b = 0; b < c && ok; ++b)
        ok = (dirs.row(b).transpose() - v).norm() >= kMinChord;
      if (ok) {
        dirs.row(c) = v.transpose();
        break;
      }
      if (attempt > 10000)
        throw NumericalError(
            "cannot place angularly separated class means; dimension too "
            "small for this many classes");
    }
  }
  double radius = sep;
  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix means = radius * dirs;
    double min_dist = std::numeric_limits<double>::infinity();
    for (int a = 0; a < num_classes; ++a)
      for (int b = a + 1; b < num_classes; ++b)
        min_dist = std::min(min_dist, (means.row(a) - means.row(b)).norm());
    if (min_dist >= sep) return means;
    // Redraw directions occasionally in case two happen to coincide.
    if (attempt % 8 == 7) {
      for (int c = 0; c < num_classes; ++c) {
        Vector v = rng.gaussian_matrix(dim, 1);
        if (v.norm() > 1e-8) dirs.row(c) = v.transpose() / v.norm();
      }
      radius = sep;
    } else {
      radius *= 1.6;
    }
  }
  throw NumericalError("failed to place class means at requested separation");
}

}  // namespace

std::string tail_kind_name(TailKind kind) {
  return kind == TailKind::Exponential ? "exp" : "pareto";
}

TailKind tail_kind_from_name(const std::string& name) {
  if (name == "exp" || name == "exponential") return TailKind::Exponential;
  if (name == "pareto") return TailKind::Pareto;
  throw ConfigError("unknown tail kind: " + name);
}

void ImbalanceProfile::validate() const {
  if (num_classes < 2) throw ConfigError("profile requires at least 2 classes");
  if (rho < 1.0) throw ConfigError("imbalance ratio must be >= 1");
  if (head_size < num_classes)
    throw ConfigError("head class size must be >= number of classes");
}

std::vector<int> ImbalanceProfile::class_sizes() const {
  validate();
  std::vector<int> sizes(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    double frac;
    if (kind == TailKind::Exponential) {
      frac = std::pow(rho, -static_cast<double>(c) / (num_classes - 1));
    } else {
      // Exponent chosen so size(C-1)/size(0) = 1/rho exactly before rounding.
      const double expo = std::log(rho) / std::log(static_cast<double>(num_classes));
      frac = std::pow(static_cast<double>(c + 1), -expo);
    }
    sizes[c] = static_cast<int>(std::lround(head_size * frac));
  }
  for (int c = 1; c < num_classes; ++c) sizes[c] = std::min(sizes[c], sizes[c - 1]);
  if (sizes.back() < 2)
    throw ConfigError("tail class has fewer than 2 samples; increase head size");
  return sizes;
}

int LtDataset::labeled_count() const {
  return static_cast<int>(std::count(labeled_mask.begin(), labeled_mask.end(), 1));
}

int LtDataset::unlabeled_count() const { return total() - labeled_count(); }

std::vector<int> LtDataset::class_sizes() const {
  std::vector<int> sizes(num_classes, 0);
  for (int y : true_labels) sizes[y]++;
  return sizes;
}

Vector LtDataset::class_distribution() const {
  const auto sizes = class_sizes();
  Vector pi(num_classes);
  for (int c = 0; c < num_classes; ++c) pi[c] = static_cast<double>(sizes[c]);
  return pi / pi.sum();
}

std::vector<int> LtDataset::labeled_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < total(); ++i)
    if (labeled_mask[i]) idx.push_back(i);
  return idx;
}

void LtDataset::validate() const {
  if (num_classes < 1) throw IoError("dataset has no classes");
  if (num_known < 0 || num_known > num_classes)
    throw IoError("known class count out of range");
  if (static_cast<int>(true_labels.size()) != total() ||
      static_cast<int>(labeled_mask.size()) != total())
    throw IoError("dataset field lengths disagree");
  for (int i = 0; i < total(); ++i) {
    if (true_labels[i] < 0 || true_labels[i] >= num_classes)
      throw IoError("label out of range");
    if (labeled_mask[i] && true_labels[i] >= num_known)
      throw IoError("labeled sample carries a novel-class label");
  }
  if (static_cast<int>(test_labels.size()) != test_features.rows())
    throw IoError("test field lengths disagree");
}

std::pair<std::vector<int>, std::vector<int>> split_counts(const LtDataset& ds) {
  std::vector<int> labeled(ds.num_classes, 0), unlabeled(ds.num_classes, 0);
  for (int i = 0; i < ds.total(); ++i) {
    if (ds.labeled_mask[i])
      labeled[ds.true_labels[i]]++;
    else
      unlabeled[ds.true_labels[i]]++;
  }
  return {labeled, unlabeled};
}

LtDataset synth_dataset(const ImbalanceProfile& profile, int dim, double sep,
                        int num_known, int test_per_class, std::uint64_t seed) {
  profile.validate();
  require(dim >= 1, "feature dimension must be positive");
  require(sep > 0.0, "class separation must be positive");
  require(num_known >= 0 && num_known <= profile.num_classes,
          "known class count out of range");
  require(test_per_class >= 0, "test_per_class must be nonnegative");

  const auto sizes = profile.class_sizes();
  const int C = profile.num_classes;
  const int M = std::accumulate(sizes.begin(), sizes.end(), 0);

  Rng rng(seed);
  const Matrix means = place_means(C, dim, sep, rng);

  LtDataset ds;
  ds.features.resize(M, dim);
  ds.true_labels.resize(M);
  ds.labeled_mask.assign(M, 0);
  ds.num_known = num_known;
  ds.num_classes = C;
  ds.rho = profile.rho;
  ds.kind = profile.kind;
  ds.seed = seed;
  ds.test_per_class = test_per_class;

  int row = 0;
  for (int c = 0; c < C; ++c) {
    const int n_labeled = (c < num_known) ? sizes[c] / 2 : 0;
    for (int k = 0; k < sizes[c]; ++k, ++row) {
      ds.features.row(row) =
          means.row(c) + rng.gaussian_matrix(1, dim).row(0);
      ds.true_labels[row] = c;
      ds.labeled_mask[row] = (k < n_labeled) ? 1 : 0;
    }
  }

  ds.test_features.resize(static_cast<Eigen::Index>(C) * test_per_class, dim);
  ds.test_labels.resize(static_cast<std::size_t>(C) * test_per_class);
  row = 0;
  for (int c = 0; c < C; ++c)
    for (int k = 0; k < test_per_class; ++k, ++row) {
      ds.test_features.row(row) =
          means.row(c) + rng.gaussian_matrix(1, dim).row(0);
      ds.test_labels[row] = c;
    }

  ds.validate();
  return ds;
}

void save_dataset(const LtDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, kVersion);
  write_pod<std::int32_t>(os, ds.num_classes);
  write_pod<std::int32_t>(os, ds.num_known);
  write_pod<std::int32_t>(os, ds.dim());
  write_pod<std::int32_t>(os, ds.test_per_class);
  write_pod<double>(os, ds.rho);
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(ds.kind));
  write_pod<std::uint64_t>(os, ds.seed);
  write_matrix(os, ds.features);
  write_matrix(os, ds.test_features);
  write_pod<std::int64_t>(os, static_cast<std::int64_t>(ds.true_labels.size()));
  for (int y : ds.true_labels) write_pod<std::int32_t>(os, y);
  for (char m : ds.labeled_mask) write_pod<std::uint8_t>(os, m);
  write_pod<std::int64_t>(os, static_cast<std::int64_t>(ds.test_labels.size()));
  for (int y : ds.test_labels) write_pod<std::int32_t>(os, y);
  if (!os) throw IoError("write failed: " + path);
}

LtDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a dataset file: " + path);
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion)
    throw IoError("unsupported dataset version " + std::to_string(version));

  LtDataset ds;
  ds.num_classes = read_pod<std::int32_t>(is);
  ds.num_known = read_pod<std::int32_t>(is);
  const int dim = read_pod<std::int32_t>(is);
  ds.test_per_class = read_pod<std::int32_t>(is);
  ds.rho = read_pod<double>(is);
  ds.kind = static_cast<TailKind>(read_pod<std::uint8_t>(is));
  ds.seed = read_pod<std::uint64_t>(is);
  ds.features = read_matrix(is);
  ds.test_features = read_matrix(is);
  if (ds.features.cols() != dim || ds.test_features.cols() != dim)
    throw IoError("feature dimension mismatch in " + path);
  auto n = read_pod<std::int64_t>(is);
  if (n != ds.features.rows()) throw IoError("label count mismatch in " + path);
  ds.true_labels.resize(n);
  for (auto& y : ds.true_labels) y = read_pod<std::int32_t>(is);
  ds.labeled_mask.resize(n);
  for (auto& m : ds.labeled_mask) m = static_cast<char>(read_pod<std::uint8_t>(is));
  n = read_pod<std::int64_t>(is);
  if (n != ds.test_features.rows())
    throw IoError("test label count mismatch in " + path);
  ds.test_labels.resize(n);
  for (auto& y : ds.test_labels) y = read_pod<std::int32_t>(is);
  ds.validate();
  return ds;
}

void export_dataset_csv(const LtDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "index,label,labeled_flag\n";
  for (int i = 0; i < ds.total(); ++i)
    os << i << ',' << ds.true_labels[i] << ','
       << static_cast<int>(ds.labeled_mask[i]) << '\n';
}

}  // namespace ltgcd
