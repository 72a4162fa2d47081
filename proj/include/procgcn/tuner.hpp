#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "procgcn/pipeline.hpp"

namespace procgcn {

enum class DatasetKind { balanced, imbalanced };

const char* to_string(DatasetKind k);

/// Imbalanced iff max class count / min class count exceeds `threshold`.
DatasetKind classify_dataset(const Dataset& dataset, double threshold = 1.5);
DatasetKind classify_counts(std::span<const std::size_t> counts, double threshold = 1.5);

/// Tuning ranges. Defaults cover the whole space; tests may narrow them.
struct SearchSpace {
  int conv_layers_min = 1, conv_layers_max = 5;
  int dense_layers_min = 1, dense_layers_max = 3;
  int units_min = 16, units_max = 512;
  double dropout_min = 0.2, dropout_max = 0.7;
  double bn_momentum_min = 0.1, bn_momentum_max = 0.999;
  double bn_eps_min = 1e-5, bn_eps_max = 1e-2;
  double lr_min = 1e-5, lr_max = 1e-2;  // log-sampled
  double weight_decay_max = 1e-3;
  double l1_max = 1e-3;
  std::vector<int> batch_sizes = {16, 32, 64, 128, 512};
  int embedding_dim_min = 10, embedding_dim_max = 50;
};

/// One draw from the space: uniform over ranges, log-uniform where the space
/// says so, conditional branches sampled only when active.
HyperParams sample_hyperparams(const SearchSpace& space, Arch arch, ConvKind conv, Rng& rng);

enum class TrialStatus { completed, pruned, failed };

struct RankKeys {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double loss = 0.0;      // validation loss at the best epoch
  double loss_std = 0.0;  // std of per-epoch validation loss
};

struct Trial {
  int id = 0;
  HyperParams hp;
  TrialStatus status = TrialStatus::failed;
  RankKeys keys;
  int best_epoch = 0;
  std::vector<double> val_curve;
  std::string error;
  std::string curves_ref;
};

/// Median rule: prune when the monitored value is strictly worse than the
/// median of completed trials' values at the same epoch. Activates after 5
/// completed trials and a 10-epoch warm-up.
bool prune_decision(std::span<const std::vector<double>> completed_curves, int epoch,
                    double value);

class MedianPruner {
 public:
  bool should_prune(int epoch, double value) const;
  void report_completed(std::vector<double> curve);

 private:
  mutable std::mutex mutex_;
  std::vector<std::vector<double>> curves_;
};

/// Lexicographic selection: balanced ranks by (accuracy desc, loss std asc,
/// loss asc); imbalanced by (weighted F1 desc, loss asc, loss std asc). Full
/// ties keep trial-id order. Only completed trials participate.
std::vector<std::size_t> rank_trials(std::span<const Trial> trials, DatasetKind kind);

struct TuneConfig {
  TrainConfig train;
  int jobs = 1;
  bool pruning = true;
  SearchSpace space;
  std::optional<DatasetKind> kind_override;
  double imbalance_threshold = 1.5;
  std::string curves_dir;  // per-trial curve CSVs land here when non-empty
};

struct TuneResult {
  std::vector<Trial> trials;
  std::size_t best_index = 0;
  DatasetKind kind = DatasetKind::balanced;
};

/// Runs `budget` trials (sample -> build -> train with the pruner), then
/// ranks them. Each trial derives its own rng streams from (seed, trial id),
/// so a parallel run samples and trains exactly as the serial one.
TuneResult tune(const PreparedData& data, Arch arch, ConvKind conv, int budget,
                const TuneConfig& config, std::uint64_t seed);

/// Rebuilds the winner with a fresh seed and trains the full epoch budget
/// without early stopping; returns the model restored to its best epoch.
std::pair<Model, TrainResult> retrain_best(const Trial& best, const PreparedData& data,
                                           TrainConfig config, std::uint64_t seed);

void write_ledger(const std::string& path, std::span<const Trial> trials);
std::vector<Trial> read_ledger(const std::string& path);

}  // namespace procgcn
