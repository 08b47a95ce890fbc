#include "ltgcd/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ltgcd {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

const std::vector<std::string> kKnownKeys = {
    "tail_kind", "rho", "num_classes", "num_known", "head_size", "dim", "sep",
    "test_per_class", "hidden", "rep_dim", "init_scale", "view_sigma", "gamma",
    "beta", "lambda", "t1", "batch", "queue", "momentum", "sinkhorn_iters",
    "sinkhorn_eps", "tau_unsup", "tau_sup", "lr_stage1", "lr_pi",
    "epochs_stage1", "target_dist", "alpha_mean", "k_neighbors", "t2",
    "lr_stage2", "epochs_stage2", "infer_mode", "group_many_min",
    "group_few_max", "seed"};

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  KeyValueConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key=value");
    cfg.entries_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return cfg;
}

void KeyValueConfig::apply_overrides(const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must be key=value: " + ov);
    entries_[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }
}

bool KeyValueConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " + it->second);
  }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + it->second);
}

void KeyValueConfig::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : entries_)
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key: " + key);
}

TargetDist target_dist_from_name(const std::string& name) {
  if (name == "learnable") return TargetDist::Learnable;
  if (name == "estimated") return TargetDist::Estimated;
  if (name == "uniform") return TargetDist::Uniform;
  throw ConfigError("unknown target distribution: " + name);
}

std::string target_dist_name(TargetDist t) {
  switch (t) {
    case TargetDist::Learnable: return "learnable";
    case TargetDist::Estimated: return "estimated";
    default: return "uniform";
  }
}

void TrainConfig::validate() const {
  if (queue < batch) throw ConfigError("queue size must be >= batch size");
  if (t1 < 1 || t2 < 1) throw ConfigError("T1 and T2 must be >= 1");
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
  if (momentum <= 0.0 || momentum >= 1.0)
    throw ConfigError("momentum must lie in (0,1)");
  if (rho < 1.0) throw ConfigError("imbalance ratio must be >= 1");
  if (gamma <= 1.0) throw ConfigError("gamma must exceed 1");
  if (batch < 1 || epochs_stage1 < 0 || epochs_stage2 < 0)
    throw ConfigError("invalid batch/epoch settings");
  target_dist_from_name(target_dist);
  if (alpha_mean != "nearest" && alpha_mean != "allpairs")
    throw ConfigError("alpha_mean must be 'nearest' or 'allpairs'");
}

TrainConfig TrainConfig::from(const KeyValueConfig& kv) {
  kv.reject_unknown(kKnownKeys);
  TrainConfig c;
  c.tail_kind = kv.get_string("tail_kind", c.tail_kind);
  c.rho = kv.get_double("rho", c.rho);
  c.num_classes = kv.get_int("num_classes", c.num_classes);
  c.num_known = kv.get_int("num_known", c.num_known);
  c.head_size = kv.get_int("head_size", c.head_size);
  c.dim = kv.get_int("dim", c.dim);
  c.sep = kv.get_double("sep", c.sep);
  c.test_per_class = kv.get_int("test_per_class", c.test_per_class);
  c.hidden = kv.get_int("hidden", c.hidden);
  c.rep_dim = kv.get_int("rep_dim", c.rep_dim);
  c.init_scale = kv.get_double("init_scale", c.init_scale);
  c.view_sigma = kv.get_double("view_sigma", c.view_sigma);
  c.gamma = kv.get_double("gamma", c.gamma);
  c.beta = kv.get_double("beta", c.beta);
  c.lambda = kv.get_double("lambda", c.lambda);
  c.t1 = kv.get_int("t1", c.t1);
  c.batch = kv.get_int("batch", c.batch);
  c.queue = kv.get_int("queue", c.queue);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.sinkhorn_iters = kv.get_int("sinkhorn_iters", c.sinkhorn_iters);
  c.sinkhorn_eps = kv.get_double("sinkhorn_eps", c.sinkhorn_eps);
  c.tau_unsup = kv.get_double("tau_unsup", c.tau_unsup);
  c.tau_sup = kv.get_double("tau_sup", c.tau_sup);
  c.lr_stage1 = kv.get_double("lr_stage1", c.lr_stage1);
  c.lr_pi = kv.get_double("lr_pi", c.lr_pi);
  c.epochs_stage1 = kv.get_int("epochs_stage1", c.epochs_stage1);
  c.target_dist = kv.get_string("target_dist", c.target_dist);
  c.alpha_mean = kv.get_string("alpha_mean", c.alpha_mean);
  c.k_neighbors = kv.get_int("k_neighbors", c.k_neighbors);
  c.t2 = kv.get_int("t2", c.t2);
  c.lr_stage2 = kv.get_double("lr_stage2", c.lr_stage2);
  c.epochs_stage2 = kv.get_int("epochs_stage2", c.epochs_stage2);
  c.infer_mode = kv.get_string("infer_mode", c.infer_mode);
  c.group_many_min = kv.get_int("group_many_min", c.group_many_min);
  c.group_few_max = kv.get_int("group_few_max", c.group_few_max);
  c.seed = kv.get_u64("seed", c.seed);
  c.validate();
  return c;
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["tail_kind"] = tail_kind;
  j["rho"] = rho;
  j["num_classes"] = num_classes;
  j["num_known"] = num_known;
  j["head_size"] = head_size;
  j["dim"] = dim;
  j["sep"] = sep;
  j["test_per_class"] = test_per_class;
  j["hidden"] = hidden;
  j["rep_dim"] = rep_dim;
  j["init_scale"] = init_scale;
  j["view_sigma"] = view_sigma;
  j["gamma"] = gamma;
  j["beta"] = beta;
  j["lambda"] = lambda;
  j["t1"] = t1;
  j["batch"] = batch;
  j["queue"] = queue;
  j["momentum"] = momentum;
  j["sinkhorn_iters"] = sinkhorn_iters;
  j["sinkhorn_eps"] = sinkhorn_eps;
  j["tau_unsup"] = tau_unsup;
  j["tau_sup"] = tau_sup;
  j["lr_stage1"] = lr_stage1;
  j["lr_pi"] = lr_pi;
  j["epochs_stage1"] = epochs_stage1;
  j["target_dist"] = target_dist;
  j["alpha_mean"] = alpha_mean;
  j["k_neighbors"] = k_neighbors;
  j["t2"] = t2;
  j["lr_stage2"] = lr_stage2;
  j["epochs_stage2"] = epochs_stage2;
  j["infer_mode"] = infer_mode;
  j["group_many_min"] = group_many_min;
  j["group_few_max"] = group_few_max;
  j["seed"] = seed;
  return j.dump(2);
}

}  // namespace ltgcd
