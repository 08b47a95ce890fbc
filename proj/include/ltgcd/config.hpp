#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ltgcd/core.hpp"

namespace ltgcd {

// Flat key=value configuration with typed accessors. Unknown keys are
// rejected at validation so typos fail loudly.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path);
  void apply_overrides(const std::vector<std::string>& overrides);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void reject_unknown(const std::vector<std::string>& known) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

enum class TargetDist { Learnable, Estimated, Uniform };
TargetDist target_dist_from_name(const std::string& name);
std::string target_dist_name(TargetDist t);

struct TrainConfig {
  // Dataset synthesis.
  std::string tail_kind = "exp";
  double rho = 20.0;
  int num_classes = 10;
  int num_known = 5;
  int head_size = 200;
  int dim = 16;
  double sep = 4.0;
  int test_per_class = 50;

  // Encoder.
  int hidden = 32;
  int rep_dim = 16;
  double init_scale = 0.2;
  double view_sigma = 0.25;  // Gaussian jitter for the second view

  // Stage-1 objective.
  double gamma = 2.0;
  double beta = 400.0;
  double lambda = 0.35;
  int t1 = 10;
  int batch = 256;
  int queue = 2048;
  double momentum = 0.99;
  int sinkhorn_iters = 100;
  double sinkhorn_eps = 0.2;
  double tau_unsup = 0.07;
  double tau_sup = 0.1;
  double lr_stage1 = 0.05;
  double lr_pi = 0.01;
  int epochs_stage1 = 50;
  std::string target_dist = "learnable";
  std::string alpha_mean = "nearest";  // or "allpairs"

  // Stage 2.
  int k_neighbors = 5;
  int t2 = 10;
  double lr_stage2 = 0.005;
  int epochs_stage2 = 30;

  // Evaluation.
  std::string infer_mode = "sskmeans";
  int group_many_min = 101;
  int group_few_max = 19;

  std::uint64_t seed = 1;

  void validate() const;
  static TrainConfig from(const KeyValueConfig& kv);
  std::string to_json() const;
};

}  // namespace ltgcd
