#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ltgcd/core.hpp"
#include "ltgcd/dataset.hpp"
#include "ltgcd/encoder.hpp"

namespace ltgcd {

enum class InferMode { KMeans, SemiSupKMeans };

InferMode infer_mode_from_name(const std::string& name);

// Class-count thresholds for the Many/Medium/Few split (training counts).
struct GroupThresholds {
  int many_min = 101;   // > 100 instances
  int few_max = 19;     // < 20 instances
};

struct GroupReport {
  std::optional<double> many, medium, few;
  std::optional<double> std_dev;  // population std over the three groups
  double all = 0.0;               // mean per-class accuracy over the subset
};

struct EvalReport {
  double acc_all = 0.0;  // instance-weighted, single global mapping
  double acc_old = 0.0;
  double acc_new = 0.0;
  GroupReport known, novel, overall;
  std::vector<int> mapping;             // predicted cluster -> class
  std::vector<double> per_class_acc;    // after mapping

  std::string to_json() const;
  std::string to_table() const;
};

// Cluster test features extracted by the frozen backbone. Semi-supervised
// mode seeds known-class centroids from labeled training features and keeps
// labeled samples pinned to their class during Lloyd updates.
std::vector<int> infer_clusters(const EncoderParams& params,
                                const LtDataset& ds, InferMode mode,
                                std::uint64_t seed);

// Optimal bijection from predicted clusters to ground-truth classes
// maximizing matched count. Returns (mapping, accuracy).
std::pair<std::vector<int>, double> hungarian_match(
    const std::vector<int>& pred, const std::vector<int>& truth, int C);

// Many/Medium/Few accuracies and their population std over a class subset.
GroupReport group_metrics(const std::vector<double>& per_class_acc,
                          const std::vector<int>& class_sizes,
                          const std::vector<int>& classes,
                          const GroupThresholds& thr);

EvalReport evaluate(const EncoderParams& params, const LtDataset& ds,
                    InferMode mode, std::uint64_t seed,
                    const GroupThresholds& thr = {});

// Evaluation from precomputed predictions (used for stage comparisons).
EvalReport evaluate_predictions(const std::vector<int>& pred,
                                const LtDataset& ds,
                                const GroupThresholds& thr = {});

}  // namespace ltgcd
