#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ltgcd/balancing.hpp"
#include "ltgcd/core.hpp"
#include "ltgcd/dataset.hpp"
#include "ltgcd/trainer.hpp"

using namespace ltgcd;

namespace {

// Desk-scale configuration so each test run stays well under a second of
// training per stage.
TrainConfig small_config() {
  TrainConfig cfg;
  cfg.rho = 5.0;
  cfg.num_classes = 4;
  cfg.num_known = 2;
  cfg.head_size = 40;
  cfg.dim = 6;
  cfg.sep = 6.0;
  cfg.test_per_class = 10;
  cfg.hidden = 12;
  cfg.rep_dim = 6;
  cfg.batch = 32;
  cfg.queue = 64;
  cfg.t1 = 4;
  cfg.sinkhorn_iters = 40;
  cfg.epochs_stage1 = 8;
  cfg.k_neighbors = 3;
  cfg.t2 = 4;
  cfg.epochs_stage2 = 6;
  cfg.seed = 5;
  return cfg;
}

LtDataset small_dataset(const TrainConfig& cfg) {
  ImbalanceProfile prof;
  prof.kind = tail_kind_from_name(cfg.tail_kind);
  prof.rho = cfg.rho;
  prof.num_classes = cfg.num_classes;
  prof.head_size = cfg.head_size;
  return synth_dataset(prof, cfg.dim, cfg.sep, cfg.num_known,
                       cfg.test_per_class, cfg.seed);
}

std::string temp_path(const char* name) {
  return std::string("/tmp/ltgcd_trainer_test_") + name;
}

}  // namespace

TEST_CASE("state initialization is deterministic and starts uniform") {
  const TrainConfig cfg = small_config();
  const LtDataset ds = small_dataset(cfg);
  const TrainState a = init_state(cfg, ds);
  const TrainState b = init_state(cfg, ds);
  CHECK(a.encoder.to_vector() == b.encoder.to_vector());
  CHECK(a.ema.to_vector() == a.encoder.to_vector());
  CHECK(a.queues.size() == 0);
  CHECK(!a.distribution_initialized);
  CHECK((a.pi_tilde.array() - 1.0 / cfg.num_classes).abs().maxCoeff() < 1e-15);
  CHECK((a.dist.pi() - a.pi_tilde).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero-epoch stages leave the encoder untouched") {
  TrainConfig cfg = small_config();
  const LtDataset ds = small_dataset(cfg);

  cfg.epochs_stage1 = 0;
  TrainState st = init_state(cfg, ds);
  const Vector before = st.encoder.to_vector();
  const StageMetrics m1 = run_stage1(cfg, ds, st);
  CHECK(m1.epochs.empty());
  CHECK(st.encoder.to_vector() == before);
  CHECK(st.queues.full());  // warm-up still fills the queues

  cfg.epochs_stage2 = 0;
  const Vector mid = st.encoder.to_vector();
  const StageMetrics m2 = run_stage2(cfg, ds, st);
  CHECK(m2.epochs.empty());
  CHECK(m2.weight_audits.empty());
  CHECK(st.encoder.to_vector() == mid);
}

TEST_CASE("stage 1 trains: finite metrics and a decreasing loss") {
  const TrainConfig cfg = small_config();
  const LtDataset ds = small_dataset(cfg);
  TrainState st = init_state(cfg, ds);
  const StageMetrics m = run_stage1(cfg, ds, st);

  REQUIRE(static_cast<int>(m.epochs.size()) == cfg.epochs_stage1);
  for (const auto& em : m.epochs) {
    CHECK(std::isfinite(em.cls_unsup));
    CHECK(std::isfinite(em.cls_sup));
    CHECK(std::isfinite(em.guided));
    CHECK(std::isfinite(em.rep_unsup));
    CHECK(std::isfinite(em.rep_sup));
  }
  const auto& first = m.epochs.front();
  const auto& last = m.epochs.back();
  CHECK(last.cls_unsup + last.rep_unsup < first.cls_unsup + first.rep_unsup);
  CHECK(st.distribution_initialized);
  CHECK(st.stage1_epoch == cfg.epochs_stage1);
}

TEST_CASE("two identical runs are bitwise identical") {
  const TrainConfig cfg = small_config();
  const LtDataset ds = small_dataset(cfg);

  TrainState a = init_state(cfg, ds);
  TrainState b = init_state(cfg, ds);
  const StageMetrics ma = run_stage1(cfg, ds, a);
  const StageMetrics mb = run_stage1(cfg, ds, b);
  CHECK(a.encoder.to_vector() == b.encoder.to_vector());
  CHECK(a.ema.to_vector() == b.ema.to_vector());
  CHECK(a.dist.raw == b.dist.raw);
  for (std::size_t e = 0; e < ma.epochs.size(); ++e) {
    CHECK(ma.epochs[e].cls_unsup == mb.epochs[e].cls_unsup);
    CHECK(ma.epochs[e].rep_unsup == mb.epochs[e].rep_unsup);
  }

  run_stage2(cfg, ds, a);
  run_stage2(cfg, ds, b);
  CHECK(a.encoder.to_vector() == b.encoder.to_vector());
}

TEST_CASE("checkpoint round trip preserves every field bitwise") {
  const TrainConfig cfg = small_config();
  const LtDataset ds = small_dataset(cfg);
  TrainState st = init_state(cfg, ds);
  run_stage1(cfg, ds, st);

  const std::string path = temp_path("ckpt.bin");
  save_checkpoint(st, path);
  TrainState loaded = load_checkpoint(path);
  CHECK(loaded.encoder.to_vector() == st.encoder.to_vector());
  CHECK(loaded.ema.to_vector() == st.ema.to_vector());
  CHECK(loaded.dist.raw == st.dist.raw);
  CHECK(loaded.pi_tilde == st.pi_tilde);
  CHECK(loaded.distribution_initialized == st.distribution_initialized);
  CHECK(loaded.stage1_epoch == st.stage1_epoch);
  CHECK(loaded.stage2_epoch == st.stage2_epoch);
  CHECK(loaded.queues.probs() == st.queues.probs());
  CHECK(loaded.queues.reps() == st.queues.reps());
  CHECK(loaded.queues.labels() == st.queues.labels());
  std::remove(path.c_str());
}

TEST_CASE("resuming from a checkpoint replays the original trajectory") {
  const TrainConfig cfg = small_config();
  const LtDataset ds = small_dataset(cfg);
  TrainState st = init_state(cfg, ds);
  run_stage1(cfg, ds, st);

  const std::string path = temp_path("resume.bin");
  save_checkpoint(st, path);
  TrainState resumed = load_checkpoint(path);
  std::remove(path.c_str());

  // Continue both copies through stage 2; the RNG state travels with the
  // checkpoint, so the trajectories must agree exactly.
  run_stage2(cfg, ds, st);
  run_stage2(cfg, ds, resumed);
  CHECK(st.encoder.to_vector() == resumed.encoder.to_vector());
}

TEST_CASE("stage 2 refreshes neighborhoods on schedule and trains") {
  const TrainConfig cfg = small_config();
  const LtDataset ds = small_dataset(cfg);
  TrainState st = init_state(cfg, ds);
  run_stage1(cfg, ds, st);

  const Matrix wc_before = st.encoder.Wc;
  const Vector bc_before = st.encoder.bc;
  const Matrix w1_before = st.encoder.W1;
  const StageMetrics m = run_stage2(cfg, ds, st);

  REQUIRE(static_cast<int>(m.epochs.size()) == cfg.epochs_stage2);
  // Refresh at the first epoch and then every t2 epochs: 6 epochs with
  // t2 = 4 gives refreshes at epochs 0 and 4.
  REQUIRE(m.weight_audits.size() == 2);
  CHECK(m.weight_audits[0].epoch == 0);
  CHECK(m.weight_audits[1].epoch == 4);
  for (const auto& audit : m.weight_audits) {
    CHECK(audit.weights.size() == ds.total());
    CHECK(audit.weights.minCoeff() >= -1.0 - 1e-12);
    CHECK(audit.weights.maxCoeff() <= 1.0 + 1e-12);
  }
  for (const auto& em : m.epochs) CHECK(std::isfinite(em.balanced));

  // The classification head stays frozen in stage 2.
  CHECK(st.encoder.Wc == wc_before);
  CHECK(st.encoder.bc == bc_before);
  CHECK(st.encoder.W1 != w1_before);
}

TEST_CASE("stage 2 descends the balanced loss within one snapshot window") {
  // A single snapshot (t2 larger than the epoch count) keeps the objective
  // fixed, and a neighborhood wider than any class forces local means the
  // initial representations do not align with, so there is slack to close.
  // The exact full-dataset objective is recomputed outside the trainer.
  TrainConfig cfg = small_config();
  cfg.t2 = 100;
  cfg.epochs_stage2 = 10;
  cfg.lr_stage2 = 0.05;
  cfg.k_neighbors = 20;
  const LtDataset ds = small_dataset(cfg);
  TrainState st = init_state(cfg, ds);

  const Matrix snapshot = forward(st.encoder, ds.features).z;
  const NeighborhoodIndex index =
      build_neighborhoods(snapshot, cfg.k_neighbors, 0);
  std::vector<int> all_ids(ds.total());
  std::iota(all_ids.begin(), all_ids.end(), 0);
  auto objective = [&](const EncoderParams& enc) {
    return balanced_loss(forward(enc, ds.features).z, all_ids, index, snapshot)
        .value;
  };

  const double before = objective(st.encoder);
  const StageMetrics m = run_stage2(cfg, ds, st);
  REQUIRE(m.weight_audits.size() == 1);
  CHECK(objective(st.encoder) < before);
}

TEST_CASE("fixed target-distribution modes report transport diagnostics") {
  TrainConfig cfg = small_config();
  cfg.epochs_stage1 = 2;
  const LtDataset ds = small_dataset(cfg);

  for (const char* mode : {"estimated", "uniform"}) {
    cfg.target_dist = mode;
    TrainState st = init_state(cfg, ds);
    const StageMetrics m = run_stage1(cfg, ds, st);
    for (const auto& em : m.epochs) {
      CHECK(em.guided == 0.0);
      CHECK(em.sinkhorn_row_violation < 1e-6);
      CHECK(em.sinkhorn_col_violation < 1e-6);
    }
  }
}

TEST_CASE("metrics CSV layout") {
  const TrainConfig cfg = small_config();
  StageMetrics m;
  EpochMetrics em;
  em.epoch = 3;
  em.cls_unsup = 1.5;
  m.epochs.push_back(em);

  const std::string path = temp_path("metrics.csv");
  append_metrics_csv(path, m, 1, true);
  append_metrics_csv(path, m, 2, false);

  std::ifstream is(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  std::remove(path.c_str());

  REQUIRE(lines.size() == 3);
  CHECK(lines[0].rfind("stage,epoch,cls_unsup", 0) == 0);
  CHECK(lines[1].rfind("1,3,1.5", 0) == 0);
  CHECK(lines[2].rfind("2,3,1.5", 0) == 0);
}

TEST_CASE("checkpoint loading rejects missing or foreign files") {
  CHECK_THROWS_AS(load_checkpoint("/tmp/ltgcd_no_such_ckpt.bin"), IoError);
  const std::string path = temp_path("bogus.bin");
  {
    std::ofstream os(path, std::ios::binary);
    os << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::remove(path.c_str());
}
