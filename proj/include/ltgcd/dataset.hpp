#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltgcd/core.hpp"

namespace ltgcd {

enum class TailKind : std::uint8_t { Exponential = 0, Pareto = 1 };

std::string tail_kind_name(TailKind kind);
TailKind tail_kind_from_name(const std::string& name);

// Class-size profile of a long-tailed dataset. Sizes are non-increasing in
// the class index and the head/tail ratio equals rho up to rounding.
struct ImbalanceProfile {
  TailKind kind = TailKind::Exponential;
  double rho = 1.0;   // head size / tail size
  int num_classes = 0;
  int head_size = 0;  // size of class 0

  std::vector<int> class_sizes() const;
  void validate() const;
};

// A synthetic long-tailed category-discovery dataset: Gaussian-mixture
// features with a
// labeled subset covering half of each known class, plus a balanced test set.
struct LtDataset {
  Matrix features;                // M x d training features
  std::vector<int> true_labels;   // hidden from training; used for eval only
  std::vector<char> labeled_mask; // true only for labeled known-class samples
  int num_known = 0;              // known classes are 0..num_known-1
  int num_classes = 0;            // C = |Y_u|
  double rho = 1.0;
  TailKind kind = TailKind::Exponential;
  std::uint64_t seed = 0;

  Matrix test_features;           // balanced; test_per_class per class
  std::vector<int> test_labels;
  int test_per_class = 0;

  int dim() const { return static_cast<int>(features.cols()); }
  int total() const { return static_cast<int>(features.rows()); }
  int labeled_count() const;
  int unlabeled_count() const;
  std::vector<int> class_sizes() const;       // training counts per class
  Vector class_distribution() const;          // sizes / M
  std::vector<int> labeled_indices() const;
  void validate() const;
};

// Per-class (labeled, unlabeled) training counts.
std::pair<std::vector<int>, std::vector<int>> split_counts(const LtDataset& ds);

// Draws per-class isotropic Gaussians whose means are at pairwise distance
// >= sep, sizes following the profile, and splits for category discovery:
// half of each known class labeled, novel classes fully unlabeled.
LtDataset synth_dataset(const ImbalanceProfile& profile, int dim, double sep,
                        int num_known, int test_per_class, std::uint64_t seed);

void save_dataset(const LtDataset& ds, const std::string& path);
LtDataset load_dataset(const std::string& path);

// Audit CSV: index,label,labeled_flag per training sample.
void export_dataset_csv(const LtDataset& ds, const std::string& path);

}  // namespace ltgcd
