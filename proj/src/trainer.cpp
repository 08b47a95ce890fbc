#include "ltgcd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <cstring>
#include <sstream>

#include "ltgcd/balancing.hpp"
#include "ltgcd/clustering.hpp"
#include "ltgcd/objectives.hpp"

namespace ltgcd {

namespace {

constexpr char kCkptMagic[4] = {'L', 'T', 'C', 'K'};

Matrix momentum_backbone_features(const EncoderParams& ema, const Matrix& x) {
  return ((x * ema.W1.transpose()).rowwise() + ema.b1.transpose())
      .array()
      .tanh()
      .matrix();
}

// Labeled known-class centroids in the momentum feature space; drives the
// known/novel reindexing of the clustering estimate.
Matrix labeled_centroids(const EncoderParams& ema, const LtDataset& ds) {
  const Matrix v = momentum_backbone_features(ema, ds.features);
  Matrix sums = Matrix::Zero(ds.num_known, v.cols());
  std::vector<int> cnt(ds.num_known, 0);
  for (int i = 0; i < ds.total(); ++i) {
    if (!ds.labeled_mask[i]) continue;
    sums.row(ds.true_labels[i]) += v.row(i);
    cnt[ds.true_labels[i]]++;
  }
  for (int k = 0; k < ds.num_known; ++k)
    if (cnt[k] > 0) sums.row(k) /= cnt[k];
  return sums;
}

Vector floored_simplex(const Vector& pi) {
  Vector p = pi.cwiseMax(kEpsFloor);
  return p / p.sum();
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  return idx;
}

double cosine_lr(double base, int epoch, int total) {
  if (total <= 1) return base;
  return base * 0.5 * (1.0 + std::cos(M_PI * epoch / (total - 1 + 1e-9)));
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw NumericalError(std::string("non-finite loss: ") + what);
}

}  // namespace

TrainState init_state(const TrainConfig& cfg, const LtDataset& ds) {
  cfg.validate();
  TrainState st;
  st.rng = Rng(cfg.seed);
  EncoderConfig ec;
  ec.in_dim = ds.dim();
  ec.hidden = cfg.hidden;
  ec.num_classes = ds.num_classes;
  ec.rep_dim = cfg.rep_dim;
  st.encoder = EncoderParams::init(ec, st.rng, cfg.init_scale);
  st.ema = st.encoder;
  st.queues = QueuePair(cfg.queue, ds.num_classes, cfg.rep_dim);
  st.pi_tilde = Vector::Constant(ds.num_classes, 1.0 / ds.num_classes);
  st.dist = LearnableDistribution::from_pi(st.pi_tilde);
  return st;
}

StageMetrics run_stage1(const TrainConfig& cfg, const LtDataset& ds,
                        TrainState& state) {
  const int M = ds.total();
  const int C = ds.num_classes;
  const TargetDist target = target_dist_from_name(cfg.target_dist);
  const ClusterOptions copts{
      .gamma = cfg.gamma,
      .alpha_mean = cfg.alpha_mean == "allpairs" ? AlphaMean::AllPairs
                                                 : AlphaMean::NearestPrototype};
  SinkhornOptions sopts{.iters = cfg.sinkhorn_iters, .eps_reg = cfg.sinkhorn_eps};
  StageMetrics metrics;

  // Queue warm-up: forward-only momentum passes until the queues are full.
  while (!state.queues.full()) {
    const auto idx = shuffled_indices(M, state.rng);
    for (int start = 0; start < M && !state.queues.full();
         start += cfg.batch) {
      const int bsz = std::min(cfg.batch, M - start);
      Matrix view2(bsz, ds.dim());
      std::vector<int> labels(bsz);
      for (int b = 0; b < bsz; ++b) {
        const int i = idx[start + b];
        view2.row(b) = ds.features.row(i) +
                       cfg.view_sigma *
                           state.rng.gaussian_matrix(1, ds.dim()).row(0);
        labels[b] = ds.labeled_mask[i] ? ds.true_labels[i] : -1;
      }
      const ForwardCache mc = forward(state.ema, view2);
      state.queues.enqueue(mc.q, mc.z, labels);
    }
  }

  for (int e = 0; e < cfg.epochs_stage1; ++e, ++state.stage1_epoch) {
    const int epoch = state.stage1_epoch;
    if (epoch % cfg.t1 == 0) {
      const Matrix v_all = momentum_backbone_features(state.ema, ds.features);
      const Matrix centroids = labeled_centroids(state.ema, ds);
      const ClusterEstimate est = estimate_distribution(
          v_all, C, cfg.seed + static_cast<std::uint64_t>(epoch), copts,
          centroids);
      state.pi_tilde = floored_simplex(est.pi_tilde);
      if (!state.distribution_initialized) {
        state.dist = LearnableDistribution::from_pi(state.pi_tilde);
        state.distribution_initialized = true;
      }
    }

    const double lr = cosine_lr(cfg.lr_stage1, e, cfg.epochs_stage1);
    EpochMetrics em;
    em.epoch = epoch;
    int batches = 0;
    const auto idx = shuffled_indices(M, state.rng);
    for (int start = 0; start < M; start += cfg.batch) {
      const int bsz = std::min(cfg.batch, M - start);
      Matrix x(bsz, ds.dim()), view2(bsz, ds.dim());
      std::vector<int> labels(bsz);
      std::vector<int> labeled_rows;
      std::vector<int> labeled_labels;
      for (int b = 0; b < bsz; ++b) {
        const int i = idx[start + b];
        x.row(b) = ds.features.row(i);
        view2.row(b) = ds.features.row(i) +
                       cfg.view_sigma *
                           state.rng.gaussian_matrix(1, ds.dim()).row(0);
        labels[b] = ds.labeled_mask[i] ? ds.true_labels[i] : -1;
        if (labels[b] >= 0) {
          labeled_rows.push_back(b);
          labeled_labels.push_back(labels[b]);
        }
      }

      const ForwardCache oc = forward(state.encoder, x);
      const ForwardCache mc = forward(state.ema, view2);
      const std::vector<int> slots = state.queues.enqueue(mc.q, mc.z, labels);

      // Pseudo-labels over the full queue under the configured target.
      Matrix H;
      SinkhornMarginals marg;
      if (target == TargetDist::Learnable) {
        GuidedLossResult gud = guided_loss(state.queues.probs(), state.dist,
                                           state.pi_tilde, cfg.beta, sopts);
        check_finite(gud.value, "guided loss");
        update_distribution(state.dist, gud.grad_raw, cfg.lr_pi);
        H = std::move(gud.pseudo_labels);
        em.guided += gud.value;
      } else {
        const Vector pi = target == TargetDist::Uniform
                              ? Vector::Constant(C, 1.0 / C)
                              : state.pi_tilde;
        H = sinkhorn_with_marginals(state.queues.probs(), pi, sopts, &marg);
        em.sinkhorn_row_violation =
            std::max(em.sinkhorn_row_violation, marg.row_violation);
        em.sinkhorn_col_violation =
            std::max(em.sinkhorn_col_violation, marg.col_violation);
      }
      Matrix h_batch(bsz, C);
      for (int b = 0; b < bsz; ++b) h_batch.row(b) = H.row(slots[b]);

      // Classification branch.
      const LossResult lu = cls_unsup(oc.q, h_batch);
      Matrix q_lab(labeled_rows.size(), C);
      for (std::size_t r = 0; r < labeled_rows.size(); ++r)
        q_lab.row(r) = oc.q.row(labeled_rows[r]);
      const LossResult ls = cls_sup(q_lab, labeled_labels);
      check_finite(lu.value, "unsupervised classification loss");
      check_finite(ls.value, "supervised classification loss");

      Matrix dLdq = (1.0 - cfg.lambda) * lu.grad;
      for (std::size_t r = 0; r < labeled_rows.size(); ++r)
        dLdq.row(labeled_rows[r]) += cfg.lambda * ls.grad.row(r);

      // Representation branch.
      const LossResult ru = rep_unsup(oc.z, mc.z, state.queues.reps(),
                                      cfg.tau_unsup, slots);
      Matrix z_lab(labeled_rows.size(), cfg.rep_dim);
      std::vector<int> own(labeled_rows.size());
      for (std::size_t r = 0; r < labeled_rows.size(); ++r) {
        z_lab.row(r) = oc.z.row(labeled_rows[r]);
        own[r] = slots[labeled_rows[r]];
      }
      const LossResult rs = rep_sup(z_lab, labeled_labels, state.queues.reps(),
                                    state.queues.labels(), cfg.tau_sup, own);
      check_finite(ru.value, "unsupervised representation loss");
      check_finite(rs.value, "supervised representation loss");

      Matrix dLdz = (1.0 - cfg.lambda) * ru.grad;
      for (std::size_t r = 0; r < labeled_rows.size(); ++r)
        dLdz.row(labeled_rows[r]) += cfg.lambda * rs.grad.row(r);

      const EncoderParams grads = backward(state.encoder, oc, dLdq, dLdz);
      sgd_step(state.encoder, grads, lr);
      momentum_update(state.encoder, state.ema, cfg.momentum);

      em.cls_unsup += lu.value;
      em.cls_sup += ls.value;
      em.rep_unsup += ru.value;
      em.rep_sup += rs.value;
      ++batches;
    }
    if (batches > 0) {
      em.cls_unsup /= batches;
      em.cls_sup /= batches;
      em.guided /= batches;
      em.rep_unsup /= batches;
      em.rep_sup /= batches;
    }
    metrics.epochs.push_back(em);
  }
  return metrics;
}

StageMetrics run_stage2(const TrainConfig& cfg, const LtDataset& ds,
                        TrainState& state) {
  const int M = ds.total();
  require(M > cfg.k_neighbors, "dataset smaller than the neighborhood size");
  StageMetrics metrics;
  NeighborhoodIndex index;
  Matrix snapshot;

  for (int e = 0; e < cfg.epochs_stage2; ++e, ++state.stage2_epoch) {
    const int epoch = state.stage2_epoch;
    if (e == 0 || epoch % cfg.t2 == 0) {
      snapshot = forward(state.encoder, ds.features).z;
      index = build_neighborhoods(snapshot, cfg.k_neighbors, epoch);
      // Density audit over the full training set at each refresh.
      WeightAudit audit;
      audit.epoch = epoch;
      audit.weights.resize(M);
      for (int i = 0; i < M; ++i) {
        Matrix members(cfg.k_neighbors + 1, snapshot.cols());
        members.row(0) = snapshot.row(i);
        for (int m = 0; m < cfg.k_neighbors; ++m)
          members.row(m + 1) = snapshot.row(index.neighbors[i][m]);
        audit.weights[i] = density_weight(members);
      }
      metrics.weight_audits.push_back(std::move(audit));
    }

    const double lr = cosine_lr(cfg.lr_stage2, e, cfg.epochs_stage2);
    EpochMetrics em;
    em.epoch = epoch;
    int batches = 0;
    const auto idx = shuffled_indices(M, state.rng);
    for (int start = 0; start < M; start += cfg.batch) {
      const int bsz = std::min(cfg.batch, M - start);
      Matrix x(bsz, ds.dim());
      std::vector<int> ids(bsz);
      for (int b = 0; b < bsz; ++b) {
        ids[b] = idx[start + b];
        x.row(b) = ds.features.row(ids[b]);
      }
      const ForwardCache oc = forward(state.encoder, x);
      const BalancedLossResult bl =
          balanced_loss(oc.z, ids, index, snapshot);
      check_finite(bl.value, "balanced loss");
      // Classification head is untouched: no dL/dq flows.
      const EncoderParams grads =
          backward(state.encoder, oc, Matrix(), bl.grad);
      sgd_step(state.encoder, grads, lr);
      em.balanced += bl.value;
      ++batches;
    }
    if (batches > 0) em.balanced /= batches;
    metrics.epochs.push_back(em);
  }
  return metrics;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kCkptMagic, 4);
  auto write_vec = [&os](const Vector& v) {
    const std::int64_t n = v.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(n * sizeof(double)));
  };
  auto write_params = [&](const EncoderParams& p) { write_vec(p.to_vector()); };
  const EncoderConfig ec = state.encoder.config();
  os.write(reinterpret_cast<const char*>(&ec), sizeof(ec));
  write_params(state.encoder);
  write_params(state.ema);
  state.queues.serialize(os);
  write_vec(state.dist.raw);
  write_vec(state.pi_tilde);
  const std::int32_t init = state.distribution_initialized ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&init), sizeof(init));
  os.write(reinterpret_cast<const char*>(&state.stage1_epoch), sizeof(int));
  os.write(reinterpret_cast<const char*>(&state.stage2_epoch), sizeof(int));
  std::ostringstream rng_text;
  state.rng.save(rng_text);
  const std::string rng_str = rng_text.str();
  const std::int64_t rn = static_cast<std::int64_t>(rng_str.size());
  os.write(reinterpret_cast<const char*>(&rn), sizeof(rn));
  os.write(rng_str.data(), rn);
  if (!os) throw IoError("checkpoint write failed: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  auto read_vec = [&is, &path]() {
    std::int64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!is || n < 0) throw IoError("checkpoint truncated: " + path);
    Vector v(n);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw IoError("checkpoint truncated: " + path);
    return v;
  };
  TrainState st;
  EncoderConfig ec;
  is.read(reinterpret_cast<char*>(&ec), sizeof(ec));
  st.encoder = EncoderParams::zeros(ec);
  st.encoder.from_vector(read_vec());
  st.ema = EncoderParams::zeros(ec);
  st.ema.from_vector(read_vec());
  st.queues = QueuePair::deserialize(is);
  st.dist.raw = read_vec();
  st.pi_tilde = read_vec();
  std::int32_t init = 0;
  is.read(reinterpret_cast<char*>(&init), sizeof(init));
  st.distribution_initialized = init != 0;
  is.read(reinterpret_cast<char*>(&st.stage1_epoch), sizeof(int));
  is.read(reinterpret_cast<char*>(&st.stage2_epoch), sizeof(int));
  std::int64_t rn = 0;
  is.read(reinterpret_cast<char*>(&rn), sizeof(rn));
  std::string rng_str(static_cast<std::size_t>(rn), '\0');
  is.read(rng_str.data(), rn);
  if (!is) throw IoError("checkpoint truncated: " + path);
  std::istringstream rng_text(rng_str);
  st.rng.load(rng_text);
  return st;
}

void append_metrics_csv(const std::string& path, const StageMetrics& metrics,
                        int stage, bool write_header) {
  std::ofstream os(path, write_header ? std::ios::trunc : std::ios::app);
  if (!os) throw IoError("cannot open for writing: " + path);
  if (write_header)
    os << "stage,epoch,cls_unsup,cls_sup,guided,rep_unsup,rep_sup,balanced,"
          "sinkhorn_row_violation,sinkhorn_col_violation\n";
  for (const auto& em : metrics.epochs)
    os << stage << ',' << em.epoch << ',' << em.cls_unsup << ',' << em.cls_sup
       << ',' << em.guided << ',' << em.rep_unsup << ',' << em.rep_sup << ','
       << em.balanced << ',' << em.sinkhorn_row_violation << ','
       << em.sinkhorn_col_violation << '\n';
}

}  // namespace ltgcd
