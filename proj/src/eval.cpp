#include "ltgcd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "ltgcd/assignment.hpp"
#include "ltgcd/clustering.hpp"

namespace ltgcd {

namespace {

Matrix backbone_features(const EncoderParams& params, const Matrix& x) {
  return ((x * params.W1.transpose()).rowwise() + params.b1.transpose())
      .array()
      .tanh()
      .matrix();
}

int nearest_center(const Matrix& centers, const Eigen::RowVectorXd& x) {
  int best = 0;
  double best_d = (x - centers.row(0)).squaredNorm();
  for (Eigen::Index c = 1; c < centers.rows(); ++c) {
    const double d = (x - centers.row(c)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

InferMode infer_mode_from_name(const std::string& name) {
  if (name == "kmeans") return InferMode::KMeans;
  if (name == "semi-sup-kmeans" || name == "sskmeans")
    return InferMode::SemiSupKMeans;
  throw ConfigError("unknown inference mode: " + name);
}

std::vector<int> infer_clusters(const EncoderParams& params,
                                const LtDataset& ds, InferMode mode,
                                std::uint64_t seed) {
  const int C = ds.num_classes;
  require(ds.test_features.rows() >= C,
          "fewer test samples than clusters");
  const Matrix test_v = backbone_features(params, ds.test_features);
  std::vector<int> pred(test_v.rows());

  if (mode == InferMode::KMeans) {
    const Matrix centers = kmeans_init(test_v, C, seed);
    for (Eigen::Index i = 0; i < test_v.rows(); ++i)
      pred[i] = nearest_center(centers, test_v.row(i));
    return pred;
  }

  // Semi-supervised k-means: known-class centroids from labeled training
  // features, novel centroids seeded by k-means++ over the test set.
  const auto lab_idx = ds.labeled_indices();
  Matrix centers(C, test_v.cols());
  std::vector<Matrix> lab_feats(ds.num_known);
  {
    Matrix lab_x(lab_idx.size(), ds.dim());
    for (std::size_t i = 0; i < lab_idx.size(); ++i)
      lab_x.row(i) = ds.features.row(lab_idx[i]);
    const Matrix lab_v = backbone_features(params, lab_x);
    std::vector<int> cnt(ds.num_known, 0);
    Matrix sums = Matrix::Zero(ds.num_known, test_v.cols());
    for (std::size_t i = 0; i < lab_idx.size(); ++i) {
      const int y = ds.true_labels[lab_idx[i]];
      sums.row(y) += lab_v.row(i);
      cnt[y]++;
    }
    for (int k = 0; k < ds.num_known; ++k) {
      require(cnt[k] > 0, "known class without labeled samples");
      centers.row(k) = sums.row(k) / cnt[k];
    }
    // Keep per-class labeled features for pinned centroid updates.
    std::vector<int> fill(ds.num_known, 0);
    for (int k = 0; k < ds.num_known; ++k)
      lab_feats[k].resize(cnt[k], test_v.cols());
    for (std::size_t i = 0; i < lab_idx.size(); ++i) {
      const int y = ds.true_labels[lab_idx[i]];
      lab_feats[y].row(fill[y]++) = lab_v.row(i);
    }
  }

  // Seed novel centroids at the point farthest from every existing center
  // (deterministic farthest-point traversal): with separated clusters each
  // new centroid lands in a still-uncovered cluster.
  for (int c = ds.num_known; c < C; ++c) {
    Eigen::Index pick = 0;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < test_v.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int cc = 0; cc < c; ++cc)
        best = std::min(best, (test_v.row(i) - centers.row(cc)).squaredNorm());
      if (best > far_d) {
        far_d = best;
        pick = i;
      }
    }
    centers.row(c) = test_v.row(pick);
  }

  for (int iter = 0; iter < 100; ++iter) {
    bool changed = (iter == 0);
    for (Eigen::Index i = 0; i < test_v.rows(); ++i) {
      const int a = nearest_center(centers, test_v.row(i));
      if (pred[i] != a) {
        pred[i] = a;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(C, test_v.cols());
    std::vector<int> cnt(C, 0);
    for (Eigen::Index i = 0; i < test_v.rows(); ++i) {
      sums.row(pred[i]) += test_v.row(i);
      cnt[pred[i]]++;
    }
    for (int c = 0; c < C; ++c) {
      if (c < ds.num_known) {
        // Labeled training samples stay pinned to their class.
        sums.row(c) += lab_feats[c].colwise().sum();
        cnt[c] += static_cast<int>(lab_feats[c].rows());
      }
      if (cnt[c] > 0) centers.row(c) = sums.row(c) / cnt[c];
    }
  }
  return pred;
}

std::pair<std::vector<int>, double> hungarian_match(
    const std::vector<int>& pred, const std::vector<int>& truth, int C) {
  require(pred.size() == truth.size(), "prediction/truth length mismatch");
  Matrix counts = Matrix::Zero(C, C);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require(pred[i] >= 0 && pred[i] < C, "predicted label out of range");
    require(truth[i] >= 0 && truth[i] < C, "true label out of range");
    counts(pred[i], truth[i]) += 1.0;
  }
  const std::vector<int> mapping = solve_assignment(-counts);
  double matched = 0.0;
  for (int r = 0; r < C; ++r) matched += counts(r, mapping[r]);
  return {mapping, matched / static_cast<double>(pred.size())};
}

GroupReport group_metrics(const std::vector<double>& per_class_acc,
                          const std::vector<int>& class_sizes,
                          const std::vector<int>& classes,
                          const GroupThresholds& thr) {
  GroupReport rep;
  std::vector<double> many, medium, few;
  double sum = 0.0;
  for (int c : classes) {
    sum += per_class_acc[c];
    if (class_sizes[c] >= thr.many_min)
      many.push_back(per_class_acc[c]);
    else if (class_sizes[c] <= thr.few_max)
      few.push_back(per_class_acc[c]);
    else
      medium.push_back(per_class_acc[c]);
  }
  rep.all = classes.empty() ? 0.0 : sum / classes.size();
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
  };
  if (!many.empty()) rep.many = mean(many);
  if (!medium.empty()) rep.medium = mean(medium);
  if (!few.empty()) rep.few = mean(few);
  if (rep.many && rep.medium && rep.few) {
    const double m = (*rep.many + *rep.medium + *rep.few) / 3.0;
    rep.std_dev = std::sqrt(((*rep.many - m) * (*rep.many - m) +
                             (*rep.medium - m) * (*rep.medium - m) +
                             (*rep.few - m) * (*rep.few - m)) /
                            3.0);
  }
  return rep;
}

EvalReport evaluate_predictions(const std::vector<int>& pred,
                                const LtDataset& ds,
                                const GroupThresholds& thr) {
  const int C = ds.num_classes;
  EvalReport rep;
  auto [mapping, acc] = hungarian_match(pred, ds.test_labels, C);
  rep.mapping = mapping;
  rep.acc_all = acc;

  std::vector<double> correct(C, 0.0);
  std::vector<double> total(C, 0.0);
  double old_ok = 0, old_n = 0, new_ok = 0, new_n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int y = ds.test_labels[i];
    const bool ok = mapping[pred[i]] == y;
    total[y] += 1;
    if (ok) correct[y] += 1;
    if (y < ds.num_known) {
      old_n += 1;
      old_ok += ok;
    } else {
      new_n += 1;
      new_ok += ok;
    }
  }
  rep.acc_old = old_n > 0 ? old_ok / old_n : 0.0;
  rep.acc_new = new_n > 0 ? new_ok / new_n : 0.0;
  rep.per_class_acc.resize(C);
  for (int c = 0; c < C; ++c)
    rep.per_class_acc[c] = total[c] > 0 ? correct[c] / total[c] : 0.0;

  const auto sizes = ds.class_sizes();
  std::vector<int> known, novel, all;
  for (int c = 0; c < C; ++c) {
    all.push_back(c);
    (c < ds.num_known ? known : novel).push_back(c);
  }
  rep.known = group_metrics(rep.per_class_acc, sizes, known, thr);
  rep.novel = group_metrics(rep.per_class_acc, sizes, novel, thr);
  rep.overall = group_metrics(rep.per_class_acc, sizes, all, thr);
  return rep;
}

EvalReport evaluate(const EncoderParams& params, const LtDataset& ds,
                    InferMode mode, std::uint64_t seed,
                    const GroupThresholds& thr) {
  return evaluate_predictions(infer_clusters(params, ds, mode, seed), ds, thr);
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["acc_all"] = acc_all;
  j["acc_old"] = acc_old;
  j["acc_new"] = acc_new;
  auto group = [](const GroupReport& g) {
    nlohmann::json gj;
    gj["all"] = g.all;
    if (g.many) gj["many"] = *g.many;
    if (g.medium) gj["medium"] = *g.medium;
    if (g.few) gj["few"] = *g.few;
    if (g.std_dev) gj["std"] = *g.std_dev;
    return gj;
  };
  j["known"] = group(known);
  j["novel"] = group(novel);
  j["overall"] = group(overall);
  j["mapping"] = mapping;
  j["per_class_acc"] = per_class_acc;
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  auto pct = [](double v) { return 100.0 * v; };
  auto cell = [&](const std::optional<double>& v) -> std::string {
    if (!v) return "   -";
    std::ostringstream c;
    c << std::fixed << std::setprecision(1) << std::setw(5) << 100.0 * *v;
    return c.str();
  };
  os << "group    Many   Med   Few   Std    All\n";
  auto row = [&](const char* name, const GroupReport& g) {
    os << std::left << std::setw(8) << name << std::right << cell(g.many)
       << ' ' << cell(g.medium) << ' ' << cell(g.few) << ' '
       << cell(g.std_dev) << ' ' << std::setw(6) << pct(g.all) << '\n';
  };
  row("known", known);
  row("novel", novel);
  row("overall", overall);
  os << "Old " << pct(acc_old) << "  New " << pct(acc_new) << "  All "
     << pct(acc_all) << '\n';
  return os.str();
}

}  // namespace ltgcd
