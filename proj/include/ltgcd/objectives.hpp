#pragma once

#include <vector>

#include "ltgcd/core.hpp"

namespace ltgcd {

struct LossResult {
  double value = 0.0;
  Matrix grad;  // w.r.t. the first (online) argument rows
};

// Unsupervised classification loss: -(1/B) sum h_ik log q_ik, h constant.
LossResult cls_unsup(const Matrix& q, const Matrix& h);

// Supervised cross-entropy over labeled rows. Empty input yields 0.
LossResult cls_sup(const Matrix& q_labeled, const std::vector<int>& labels);

// (1 - lambda) L_u + lambda L_s + L_gud.
double cls_total(double loss_unsup, double loss_sup, double loss_guided,
                 double lambda);

// InfoNCE with the momentum view of the same sample as the positive and
// the queue as negatives. own_slot[i] >= 0 excludes that queue row from
// sample i's negatives (the sample's own entry).
LossResult rep_unsup(const Matrix& z, const Matrix& z_pos,
                     const Matrix& queue_reps, double tau,
                     const std::vector<int>& own_slot = {});

// Supervised contrastive loss: positives are same-label queue entries,
// averaged per anchor over its positives; anchors without positives are
// excluded from the batch average. Returns gradients w.r.t. the anchors.
LossResult rep_sup(const Matrix& z_labeled, const std::vector<int>& labels,
                   const Matrix& queue_reps,
                   const std::vector<int>& queue_labels, double tau,
                   const std::vector<int>& own_slot = {});

// (1 - lambda) L_u + lambda L_s.
double rep_total(double loss_unsup, double loss_sup, double lambda);

}  // namespace ltgcd
