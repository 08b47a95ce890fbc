// Command-line front end: dataset synthesis, two-stage training, evaluation,
// reporting, gradient checking, and a small ablation driver.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ltgcd/balancing.hpp"
#include "ltgcd/clustering.hpp"
#include "ltgcd/config.hpp"
#include "ltgcd/core.hpp"
#include "ltgcd/dataset.hpp"
#include "ltgcd/encoder.hpp"
#include "ltgcd/eval.hpp"
#include "ltgcd/objectives.hpp"
#include "ltgcd/pseudo_label.hpp"
#include "ltgcd/trainer.hpp"

namespace fs = std::filesystem;
using namespace ltgcd;

namespace {

TrainConfig resolve_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
  KeyValueConfig kv;
  if (!config_path.empty()) kv = KeyValueConfig::from_file(config_path);
  kv.apply_overrides(overrides);
  return TrainConfig::from(kv);
}

ImbalanceProfile profile_of(const TrainConfig& cfg) {
  ImbalanceProfile prof;
  prof.kind = tail_kind_from_name(cfg.tail_kind);
  prof.rho = cfg.rho;
  prof.num_classes = cfg.num_classes;
  prof.head_size = cfg.head_size;
  return prof;
}

LtDataset dataset_for(const TrainConfig& cfg, const std::string& dataset_path) {
  if (!dataset_path.empty()) return load_dataset(dataset_path);
  return synth_dataset(profile_of(cfg), cfg.dim, cfg.sep, cfg.num_known,
                       cfg.test_per_class, cfg.seed);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

EvalReport evaluate_state(const TrainConfig& cfg, const LtDataset& ds,
                          const TrainState& state) {
  const GroupThresholds thr{cfg.group_many_min, cfg.group_few_max};
  return evaluate(state.encoder, ds, infer_mode_from_name(cfg.infer_mode),
                  cfg.seed, thr);
}

int cmd_synth(const TrainConfig& cfg, const std::string& out,
              const std::string& csv) {
  const LtDataset ds = dataset_for(cfg, "");
  save_dataset(ds, out);
  if (!csv.empty()) export_dataset_csv(ds, csv);
  const auto sizes = ds.class_sizes();
  std::cout << "wrote " << out << ": " << ds.total() << " train / "
            << ds.test_features.rows() << " test samples, " << ds.num_classes
            << " classes (" << ds.num_known << " known), head " << sizes.front()
            << " tail " << sizes.back() << "\n";
  return 0;
}

int cmd_train(const TrainConfig& cfg, const std::string& run_dir,
              const std::string& dataset_path, const std::string& resume,
              const std::string& stage) {
  fs::create_directories(fs::path(run_dir) / "checkpoints");
  write_text(fs::path(run_dir) / "config.json", cfg.to_json());
  const LtDataset ds = dataset_for(cfg, dataset_path);
  if (dataset_path.empty())
    save_dataset(ds, (fs::path(run_dir) / "dataset.bin").string());

  TrainState state =
      resume.empty() ? init_state(cfg, ds) : load_checkpoint(resume);
  const std::string metrics_path = (fs::path(run_dir) / "metrics.csv").string();
  bool header = resume.empty();

  nlohmann::json stages_json;
  if (stage == "1" || stage == "both") {
    const StageMetrics m = run_stage1(cfg, ds, state);
    append_metrics_csv(metrics_path, m, 1, header);
    header = false;
    save_checkpoint(state,
                    (fs::path(run_dir) / "checkpoints" / "stage1.ckpt").string());
    const EvalReport rep = evaluate_state(cfg, ds, state);
    stages_json["stage1"] = nlohmann::json::parse(rep.to_json());
    std::cout << "stage 1 done: All " << rep.acc_all << " Old " << rep.acc_old
              << " New " << rep.acc_new << "\n";
  }
  if (stage == "2" || stage == "both") {
    const StageMetrics m = run_stage2(cfg, ds, state);
    append_metrics_csv(metrics_path, m, 2, header);
    save_checkpoint(state,
                    (fs::path(run_dir) / "checkpoints" / "stage2.ckpt").string());
    const EvalReport rep = evaluate_state(cfg, ds, state);
    stages_json["stage2"] = nlohmann::json::parse(rep.to_json());
    std::cout << "stage 2 done: All " << rep.acc_all << " Old " << rep.acc_old
              << " New " << rep.acc_new << "\n";
  }

  const EvalReport final_rep = evaluate_state(cfg, ds, state);
  nlohmann::json report = nlohmann::json::parse(final_rep.to_json());
  report["stages"] = stages_json;
  write_text(fs::path(run_dir) / "report.json", report.dump(2));
  std::cout << final_rep.to_table();
  return 0;
}

int cmd_eval(const TrainConfig& cfg, const std::string& checkpoint,
             const std::string& dataset_path, const std::string& json_out) {
  const LtDataset ds = dataset_for(cfg, dataset_path);
  const TrainState state = load_checkpoint(checkpoint);
  const EvalReport rep = evaluate_state(cfg, ds, state);
  if (!json_out.empty()) write_text(json_out, rep.to_json());
  std::cout << rep.to_table();
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const fs::path path = fs::path(run_dir) / "report.json";
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  is >> j;
  auto pct = [](const nlohmann::json& v) { return 100.0 * v.get<double>(); };
  std::cout << "All " << pct(j["acc_all"]) << "  Old " << pct(j["acc_old"])
            << "  New " << pct(j["acc_new"]) << "\n";
  for (const char* grp : {"known", "novel", "overall"}) {
    std::cout << grp << ":";
    for (const char* k : {"many", "medium", "few", "std", "all"})
      if (j[grp].contains(k)) std::cout << "  " << k << " " << pct(j[grp][k]);
    std::cout << "\n";
  }
  if (j.contains("stages") && j["stages"].contains("stage1") &&
      j["stages"].contains("stage2")) {
    std::cout << "stage1 All " << pct(j["stages"]["stage1"]["acc_all"])
              << " -> stage2 All " << pct(j["stages"]["stage2"]["acc_all"])
              << "\n";
  }
  return 0;
}

// Analytic-vs-numeric gradient audit across every differentiable loss.
// Returns the number of failures against the tolerance.
int cmd_gradcheck(std::uint64_t seed, double tol) {
  Rng rng(seed);
  int failures = 0;
  auto report = [&](const char* name, double err) {
    const bool ok = err < tol;
    if (!ok) ++failures;
    std::cout << (ok ? "pass" : "FAIL") << "  " << name << "  max_rel_err="
              << err << "\n";
  };
  auto unit_rows = [&](int n, int d) {
    Matrix m = rng.gaussian_matrix(n, d);
    for (int i = 0; i < n; ++i) m.row(i).normalize();
    return m;
  };
  auto simplex_rows = [&](int n, int c) {
    Matrix m(n, c);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = 0.05 + rng.uniform();
      m.row(i) /= m.row(i).sum();
    }
    return m;
  };
  auto fd_vs = [&](const Matrix& x, auto value, const Matrix& analytic) {
    double worst = 0.0;
    Matrix xp = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        xp(i, j) = x(i, j) + 1e-6;
        const double fp = value(xp);
        xp(i, j) = x(i, j) - 1e-6;
        const double fm = value(xp);
        xp(i, j) = x(i, j);
        const double fd = (fp - fm) / 2e-6;
        worst = std::max(worst, std::abs(fd - analytic(i, j)) /
                                    (std::abs(fd) + 1e-8));
      }
    return worst;
  };

  {
    const Matrix q = simplex_rows(6, 4), h = simplex_rows(6, 4);
    report("soft cross entropy", fd_vs(q, [&](const Matrix& m) {
             return cls_unsup(m, h).value;
           }, cls_unsup(q, h).grad));
  }
  {
    const Matrix q = simplex_rows(5, 4);
    const std::vector<int> y = {0, 3, 1, 2, 0};
    report("labeled cross entropy", fd_vs(q, [&](const Matrix& m) {
             return cls_sup(m, y).value;
           }, cls_sup(q, y).grad));
  }
  {
    const Matrix z = unit_rows(4, 5), zp = unit_rows(4, 5),
                 queue = unit_rows(9, 5);
    report("contrastive", fd_vs(z, [&](const Matrix& m) {
             return rep_unsup(m, zp, queue, 0.3).value;
           }, rep_unsup(z, zp, queue, 0.3).grad));
  }
  {
    const Matrix z = unit_rows(3, 5), queue = unit_rows(10, 5);
    const std::vector<int> y = {0, 1, 0};
    const std::vector<int> qy = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
    report("supervised contrastive", fd_vs(z, [&](const Matrix& m) {
             return rep_sup(m, y, queue, qy, 0.25).value;
           }, rep_sup(z, y, queue, qy, 0.25).grad));
  }
  {
    const Matrix X = rng.gaussian_matrix(12, 4);
    const Matrix P = rng.gaussian_matrix(3, 4);
    const Matrix Phi = target_assign(X, P, 2.0).first;
    report("prototype clustering", fd_vs(P, [&](const Matrix& m) {
             return cluster_loss(Phi, soft_assign(X, m));
           }, cluster_loss_grad(X, P, Phi, soft_assign(X, P))));
  }
  {
    const Matrix snap = unit_rows(20, 4);
    const NeighborhoodIndex idx = build_neighborhoods(snap, 3);
    const Matrix z = unit_rows(4, 4);
    const std::vector<int> ids = {1, 6, 12, 18};
    report("balanced alignment", fd_vs(z, [&](const Matrix& m) {
             return balanced_loss(m, ids, idx, snap).value;
           }, balanced_loss(z, ids, idx, snap).grad));
  }
  {
    const Matrix Q = simplex_rows(10, 4);
    Vector p0(4);
    p0 << 0.35, 0.3, 0.2, 0.15;
    const LearnableDistribution dist = LearnableDistribution::from_pi(p0);
    Vector pt(4);
    pt << 0.45, 0.25, 0.2, 0.1;
    const SinkhornOptions opts{50, 0.2};
    const GuidedLossResult g = guided_loss(Q, dist, pt, 2.0, opts);
    const Vector fd = guided_loss_fd_grad(Q, dist, pt, 2.0, opts);
    double worst = 0.0;
    for (Eigen::Index b = 0; b < fd.size(); ++b)
      worst = std::max(worst, std::abs(g.grad_raw[b] - fd[b]) /
                                  (std::abs(fd[b]) + 1e-8));
    report("guided transport", worst);
  }

  std::cout << (failures == 0 ? "all gradients verified\n"
                              : "gradient check FAILED\n");
  return failures == 0 ? 0 : 1;
}

int cmd_ablate(const TrainConfig& base, const std::string& run_dir) {
  fs::create_directories(run_dir);
  nlohmann::json out;
  const LtDataset ds = dataset_for(base, "");
  for (const char* target : {"learnable", "estimated", "uniform"}) {
    TrainConfig cfg = base;
    cfg.target_dist = target;
    TrainState state = init_state(cfg, ds);
    run_stage1(cfg, ds, state);
    const EvalReport s1 = evaluate_state(cfg, ds, state);
    run_stage2(cfg, ds, state);
    const EvalReport s2 = evaluate_state(cfg, ds, state);
    out[target] = {{"stage1_acc_all", s1.acc_all},
                   {"stage2_acc_all", s2.acc_all},
                   {"stage2_acc_old", s2.acc_old},
                   {"stage2_acc_new", s2.acc_new}};
    std::cout << target << ": stage1 All " << s1.acc_all << ", stage2 All "
              << s2.acc_all << "\n";
  }
  write_text(fs::path(run_dir) / "ablate.json", out.dump(2));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-tailed category discovery over synthetic features"};
  app.require_subcommand(1);

  std::string config_path, out_path, csv_path, run_dir, dataset_path;
  std::string checkpoint, json_out, resume, stage = "both";
  std::vector<std::string> overrides;
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value configuration file");
    cmd->add_option("--set", overrides, "override, e.g. --set rho=50");
  };

  CLI::App* synth = app.add_subcommand("synth", "synthesize a dataset");
  add_config(synth);
  synth->add_option("--out", out_path, "output dataset file")->required();
  synth->add_option("--csv", csv_path, "optional per-sample audit CSV");

  CLI::App* train = app.add_subcommand("train", "run the training pipeline");
  add_config(train);
  train->add_option("--run-dir", run_dir, "output directory")->required();
  train->add_option("--dataset", dataset_path, "existing dataset file");
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_option("--stage", stage, "1, 2, or both")
      ->check(CLI::IsMember({"1", "2", "both"}));

  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config(evalc);
  evalc->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  evalc->add_option("--dataset", dataset_path, "dataset file");
  evalc->add_option("--json", json_out, "write the report JSON here");

  CLI::App* report = app.add_subcommand("report", "summarize a finished run");
  report->add_option("--run-dir", run_dir, "run directory")->required();

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "verify analytic gradients numerically");
  gradcheck->add_option("--seed", gc_seed, "random seed");
  gradcheck->add_option("--tol", gc_tol, "max relative error tolerance");

  CLI::App* ablate =
      app.add_subcommand("ablate", "compare target-distribution variants");
  add_config(ablate);
  ablate->add_option("--run-dir", run_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return cmd_synth(resolve_config(config_path, overrides), out_path,
                       csv_path);
    if (train->parsed())
      return cmd_train(resolve_config(config_path, overrides), run_dir,
                       dataset_path, resume, stage);
    if (evalc->parsed())
      return cmd_eval(resolve_config(config_path, overrides), checkpoint,
                      dataset_path, json_out);
    if (report->parsed()) return cmd_report(run_dir);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_tol);
    if (ablate->parsed())
      return cmd_ablate(resolve_config(config_path, overrides), run_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
