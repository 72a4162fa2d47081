#include "procgcn/tuner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace procgcn {

const char* to_string(DatasetKind k) {
  return k == DatasetKind::balanced ? "balanced" : "imbalanced";
}

DatasetKind classify_counts(std::span<const std::size_t> counts, double threshold) {
  if (counts.size() < 2) throw DataError("need at least 2 classes");
  std::size_t mn = counts[0], mx = counts[0];
  for (auto c : counts) {
    mn = std::min(mn, c);
    mx = std::max(mx, c);
  }
  if (mn == 0) return DatasetKind::imbalanced;
  return static_cast<double>(mx) / static_cast<double>(mn) > threshold
             ? DatasetKind::imbalanced
             : DatasetKind::balanced;
}

DatasetKind classify_dataset(const Dataset& dataset, double threshold) {
  auto counts = dataset.class_counts();
  return classify_counts(counts, threshold);
}

// --- sampling -----------------------------------------------------------------

namespace {

const std::vector<Activation> kActivations = {Activation::relu,     Activation::leaky_relu,
                                              Activation::elu,      Activation::tanh,
                                              Activation::softplus, Activation::gelu};
const std::vector<Aggr> kAggrs = {Aggr::add, Aggr::mean, Aggr::max};
const std::vector<Pooling> kPoolings = {Pooling::mean, Pooling::add, Pooling::max};

LayerSpec sample_layer(const SearchSpace& s, bool conv, ConvKind kind, Rng& rng) {
  LayerSpec l;
  l.units = static_cast<int>(rng.uniform_int(s.units_min, s.units_max));
  l.activation = rng.pick(kActivations);
  l.skip = conv && rng.flip();  // skip connections are a conv-stack option
  if (rng.flip()) l.dropout = rng.uniform(s.dropout_min, s.dropout_max);
  if (rng.flip())
    l.batch_norm = BatchNormSpec{rng.uniform(s.bn_momentum_min, s.bn_momentum_max),
                                 rng.uniform(s.bn_eps_min, s.bn_eps_max)};
  if (conv && kind == ConvKind::graphconv) l.aggr = rng.pick(kAggrs);
  return l;
}

std::vector<LayerSpec> sample_stack(const SearchSpace& s, int lo, int hi, bool conv,
                                    ConvKind kind, Rng& rng) {
  std::vector<LayerSpec> stack(static_cast<std::size_t>(rng.uniform_int(lo, hi)));
  for (auto& l : stack) l = sample_layer(s, conv, kind, rng);
  return stack;
}

OptimizerSpec sample_optimizer(const SearchSpace& s, Rng& rng) {
  OptimizerSpec o;
  switch (rng.uniform_int(0, 2)) {
    case 0:
      o.kind = OptimizerKind::adam;
      o.beta1 = rng.uniform(0.85, 0.99);
      o.beta2 = rng.uniform(0.99, 0.999);
      break;
    case 1:
      o.kind = OptimizerKind::sgd;
      o.momentum = rng.uniform(0.0, 0.9);
      break;
    default:
      o.kind = OptimizerKind::rmsprop;
      o.alpha = rng.uniform(0.9, 0.999);
      o.momentum = rng.uniform(0.0, 0.9);
      o.eps = rng.uniform(1e-9, 1e-7);
      break;
  }
  o.lr = rng.log_uniform(s.lr_min, s.lr_max);
  o.weight_decay = rng.uniform(0.0, s.weight_decay_max);
  return o;
}

SchedulerSpec sample_scheduler(Rng& rng) {
  SchedulerSpec sc;
  switch (rng.uniform_int(0, 6)) {
    case 0:
      sc.kind = SchedulerKind::step;
      sc.step_size = static_cast<int>(rng.uniform_int(1, 50));
      sc.gamma = rng.uniform(0.1, 0.9);
      break;
    case 1:
      sc.kind = SchedulerKind::exponential;
      sc.gamma = rng.uniform(0.85, 0.99);
      break;
    case 2:
      sc.kind = SchedulerKind::plateau;
      sc.factor = rng.uniform(0.1, 0.9);
      sc.patience = static_cast<int>(rng.uniform_int(1, 50));
      sc.threshold = rng.uniform(1e-4, 1e-2);
      sc.eps = rng.uniform(1e-8, 1e-4);
      break;
    case 3:
      sc.kind = SchedulerKind::polynomial;
      sc.power = rng.uniform(0.1, 2.0);
      sc.total_iters = static_cast<int>(rng.uniform_int(2, 300));
      break;
    case 4:
      sc.kind = SchedulerKind::cosine;
      sc.t_max = static_cast<int>(rng.uniform_int(10, 100));
      sc.eta_min = rng.uniform(1e-6, 1e-2);
      break;
    case 5: {
      sc.kind = SchedulerKind::cyclic;
      sc.base_lr = rng.log_uniform(1e-5, 1e-2);
      sc.max_lr = rng.log_uniform(1e-3, 1e-1);
      int guard = 0;
      while (sc.base_lr >= sc.max_lr && ++guard < 100) {
        sc.base_lr = rng.log_uniform(1e-5, 1e-2);
        sc.max_lr = rng.log_uniform(1e-3, 1e-1);
      }
      if (sc.base_lr >= sc.max_lr) sc.base_lr = sc.max_lr / 10.0;
      sc.step_size_up = static_cast<int>(rng.uniform_int(5, 200));
      break;
    }
    default:
      sc.kind = SchedulerKind::one_cycle;
      sc.max_lr = rng.uniform(1e-3, 1e-1);
      sc.pct_start = rng.uniform(0.1, 0.5);
      break;
  }
  return sc;
}

}  // namespace

HyperParams sample_hyperparams(const SearchSpace& s, Arch arch, ConvKind conv, Rng& rng) {
  HyperParams hp;
  hp.conv_kind = conv;
  hp.arch = arch;
  hp.node_stack = sample_stack(s, s.conv_layers_min, s.conv_layers_max, true, conv, rng);
  if (arch == Arch::two_level_pseudo)
    hp.pseudo_stack = sample_stack(s, s.conv_layers_min, s.conv_layers_max, true, conv, rng);
  if (arch == Arch::two_level_embed) {
    hp.embed_stack = sample_stack(s, s.conv_layers_min, s.conv_layers_max, true, conv, rng);
    hp.embedding_dim = static_cast<int>(rng.uniform_int(s.embedding_dim_min, s.embedding_dim_max));
  }
  if (arch == Arch::two_level_pseudo || arch == Arch::two_level_embed)
    hp.concat_stack = sample_stack(s, s.conv_layers_min, s.conv_layers_max, true, conv, rng);
  hp.pooling = rng.pick(kPoolings);
  if (arch != Arch::one_level)
    hp.graph_dense = sample_stack(s, s.dense_layers_min, s.dense_layers_max, false, conv, rng);
  hp.concat_dense = sample_stack(s, s.dense_layers_min, s.dense_layers_max, false, conv, rng);
  hp.optimizer = sample_optimizer(s, rng);
  hp.scheduler = sample_scheduler(rng);
  hp.loss = rng.flip() ? LossKind::cross_entropy : LossKind::multi_margin;
  hp.batch_size = rng.pick(s.batch_sizes);
  hp.l1 = rng.uniform(0.0, s.l1_max);
  return hp;
}

// --- pruning -------------------------------------------------------------------

namespace {

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

bool prune_decision(std::span<const std::vector<double>> completed_curves, int epoch,
                    double value) {
  if (completed_curves.size() < 5) return false;  // activation threshold
  if (epoch < 10) return false;                   // warm-up
  std::vector<double> peers;
  for (const auto& curve : completed_curves)
    if (static_cast<std::size_t>(epoch) <= curve.size())
      peers.push_back(curve[static_cast<std::size_t>(epoch) - 1]);
  if (peers.size() < 5) return false;
  return value > median_of(std::move(peers));  // strictly worse than the median
}

bool MedianPruner::should_prune(int epoch, double value) const {
  std::lock_guard<std::mutex> lock(mutex_);
  return prune_decision(curves_, epoch, value);
}

void MedianPruner::report_completed(std::vector<double> curve) {
  std::lock_guard<std::mutex> lock(mutex_);
  curves_.push_back(std::move(curve));
}

// --- ranking -------------------------------------------------------------------

std::vector<std::size_t> rank_trials(std::span<const Trial> trials, DatasetKind kind) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < trials.size(); ++i)
    if (trials[i].status == TrialStatus::completed) order.push_back(i);
  if (order.empty()) throw Error("no completed trials to rank");

  auto better = [&](std::size_t a, std::size_t b) {
    const RankKeys& x = trials[a].keys;
    const RankKeys& y = trials[b].keys;
    if (kind == DatasetKind::balanced) {
      if (x.accuracy != y.accuracy) return x.accuracy > y.accuracy;
      if (x.loss_std != y.loss_std) return x.loss_std < y.loss_std;
      if (x.loss != y.loss) return x.loss < y.loss;
    } else {
      if (x.weighted_f1 != y.weighted_f1) return x.weighted_f1 > y.weighted_f1;
      if (x.loss != y.loss) return x.loss < y.loss;
      if (x.loss_std != y.loss_std) return x.loss_std < y.loss_std;
    }
    return trials[a].id < trials[b].id;
  };
  std::stable_sort(order.begin(), order.end(), better);
  return order;
}

// --- tuning --------------------------------------------------------------------

namespace {

Trial run_trial(int id, const PreparedData& data, Arch arch, ConvKind conv,
                const TuneConfig& config, std::uint64_t seed, MedianPruner* pruner) {
  Trial trial;
  trial.id = id;
  Rng sample_rng(seed, "sample", static_cast<std::uint64_t>(id));
  trial.hp = sample_hyperparams(config.space, arch, conv, sample_rng);
  try {
    Model model = build_model(trial.hp, data.dims, static_cast<int>(data.class_names.size()),
                              Rng::mix(seed, "init", static_cast<std::uint64_t>(id)));
    PruneHook hook;
    if (pruner)
      hook = [pruner](int epoch, double val_loss) { return pruner->should_prune(epoch, val_loss); };
    TrainResult res =
        train_model(model, data.train_graphs, data.val_graphs, config.train,
                    Rng::mix(seed, "train", static_cast<std::uint64_t>(id)), hook);

    trial.best_epoch = res.best_epoch;
    for (const auto& p : res.curve) trial.val_curve.push_back(p.val_loss);
    if (res.pruned) {
      trial.status = TrialStatus::pruned;
    } else {
      trial.status = TrialStatus::completed;
      trial.keys = {res.best_metrics.accuracy, res.best_metrics.weighted_f1, res.best_val_loss,
                    res.val_loss_std};
      if (pruner) pruner->report_completed(trial.val_curve);
    }
    if (!config.curves_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof(name), "trial_%04d.csv", id);
      trial.curves_ref = std::string(name);
      write_curves_csv(config.curves_dir + "/" + trial.curves_ref, res.curve);
    }
  } catch (const Error& e) {
    trial.status = TrialStatus::failed;
    trial.error = e.what();
  }
  return trial;
}

}  // namespace

TuneResult tune(const PreparedData& data, Arch arch, ConvKind conv, int budget,
                const TuneConfig& config, std::uint64_t seed) {
  if (budget < 1) throw ConfigError("tuning budget must be at least 1");

  TuneResult result;
  result.kind = config.kind_override.value_or(
      classify_counts(
          [&] {
            std::vector<std::size_t> counts(data.class_names.size(), 0);
            for (const auto& g : data.train_graphs) ++counts[static_cast<std::size_t>(g.label)];
            for (const auto& g : data.val_graphs) ++counts[static_cast<std::size_t>(g.label)];
            return counts;
          }(),
          config.imbalance_threshold));

  MedianPruner pruner;
  MedianPruner* pruner_ptr = config.pruning ? &pruner : nullptr;
  result.trials.resize(static_cast<std::size_t>(budget));

  const int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    for (int id = 0; id < budget; ++id)
      result.trials[static_cast<std::size_t>(id)] =
          run_trial(id, data, arch, conv, config, seed, pruner_ptr);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      while (true) {
        const int id = next.fetch_add(1);
        if (id >= budget) return;
        result.trials[static_cast<std::size_t>(id)] =
            run_trial(id, data, arch, conv, config, seed, pruner_ptr);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  bool any_completed = false;
  for (const auto& t : result.trials)
    if (t.status == TrialStatus::completed) any_completed = true;
  if (!any_completed) {
    std::string causes;
    for (const auto& t : result.trials)
      if (!t.error.empty()) causes += "\n  trial " + std::to_string(t.id) + ": " + t.error;
    throw Error("all trials failed or were pruned" + causes);
  }
  result.best_index = rank_trials(result.trials, result.kind).front();
  return result;
}

std::pair<Model, TrainResult> retrain_best(const Trial& best, const PreparedData& data,
                                           TrainConfig config, std::uint64_t seed) {
  if (best.status != TrialStatus::completed) throw Error("cannot retrain an incomplete trial");
  config.early_stopping = false;  // run the full budget to expose post-best behavior
  Model model = build_model(best.hp, data.dims, static_cast<int>(data.class_names.size()),
                            Rng::mix(seed, "retrain_init", static_cast<std::uint64_t>(best.id)));
  TrainResult res =
      train_model(model, data.train_graphs, data.val_graphs, config,
                  Rng::mix(seed, "retrain", static_cast<std::uint64_t>(best.id)));
  return {std::move(model), std::move(res)};
}

// --- ledger --------------------------------------------------------------------

namespace {

const char* to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::completed: return "completed";
    case TrialStatus::pruned: return "pruned";
    case TrialStatus::failed: return "failed";
  }
  return "?";
}

TrialStatus status_from_string(const std::string& s) {
  if (s == "completed") return TrialStatus::completed;
  if (s == "pruned") return TrialStatus::pruned;
  if (s == "failed") return TrialStatus::failed;
  throw DataError("unknown trial status: " + s);
}

}  // namespace

void write_ledger(const std::string& path, std::span<const Trial> trials) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ledger: " + path);
  for (const auto& t : trials) {
    nlohmann::json j;
    j["id"] = t.id;
    j["status"] = to_string(t.status);
    j["hp"] = t.hp.to_json();
    if (t.status == TrialStatus::completed) {
      j["keys"] = {{"accuracy", t.keys.accuracy},
                   {"weighted_f1", t.keys.weighted_f1},
                   {"loss", t.keys.loss},
                   {"loss_std", t.keys.loss_std}};
      j["best_epoch"] = t.best_epoch;
    }
    j["epochs"] = t.val_curve.size();
    if (!t.curves_ref.empty()) j["curves"] = t.curves_ref;
    if (!t.error.empty()) j["error"] = t.error;
    out << j.dump() << '\n';
  }
}

std::vector<Trial> read_ledger(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ledger: " + path);
  std::vector<Trial> trials;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Trial t;
    t.id = j.at("id").get<int>();
    t.status = status_from_string(j.at("status").get<std::string>());
    t.hp = HyperParams::from_json(j.at("hp"));
    if (j.contains("keys")) {
      t.keys.accuracy = j["keys"].at("accuracy").get<double>();
      t.keys.weighted_f1 = j["keys"].at("weighted_f1").get<double>();
      t.keys.loss = j["keys"].at("loss").get<double>();
      t.keys.loss_std = j["keys"].at("loss_std").get<double>();
      t.best_epoch = j.value("best_epoch", 0);
    }
    t.curves_ref = j.value("curves", "");
    t.error = j.value("error", "");
    trials.push_back(std::move(t));
  }
  return trials;
}

}  // namespace procgcn
