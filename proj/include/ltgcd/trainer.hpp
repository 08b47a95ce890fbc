#pragma once

#include <string>
#include <vector>

#include "ltgcd/config.hpp"
#include "ltgcd/core.hpp"
#include "ltgcd/dataset.hpp"
#include "ltgcd/encoder.hpp"
#include "ltgcd/pseudo_label.hpp"

namespace ltgcd {

struct TrainState {
  EncoderParams encoder;
  EncoderParams ema;
  QueuePair queues;
  LearnableDistribution dist;
  Vector pi_tilde;
  bool distribution_initialized = false;
  int stage1_epoch = 0;
  int stage2_epoch = 0;
  Rng rng{0};
};

struct EpochMetrics {
  int epoch = 0;
  double cls_unsup = 0.0;
  double cls_sup = 0.0;
  double guided = 0.0;
  double rep_unsup = 0.0;
  double rep_sup = 0.0;
  double balanced = 0.0;
  double sinkhorn_row_violation = 0.0;
  double sinkhorn_col_violation = 0.0;
};

// Per-sample density weights recorded at a neighborhood refresh.
struct WeightAudit {
  int epoch = 0;
  Vector weights;  // length M
};

struct StageMetrics {
  std::vector<EpochMetrics> epochs;
  std::vector<WeightAudit> weight_audits;  // stage 2 only
};

TrainState init_state(const TrainConfig& cfg, const LtDataset& ds);

// Stage 1: queue warm-up, periodic distribution estimation, Sinkhorn
// pseudo-labeling, joint classification + representation SGD.
StageMetrics run_stage1(const TrainConfig& cfg, const LtDataset& ds,
                        TrainState& state);

// Stage 2: periodic neighborhood refresh and the balanced loss on the
// backbone and projection head only.
StageMetrics run_stage2(const TrainConfig& cfg, const LtDataset& ds,
                        TrainState& state);

void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

void append_metrics_csv(const std::string& path, const StageMetrics& metrics,
                        int stage, bool write_header);

}  // namespace ltgcd
