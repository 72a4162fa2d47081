#pragma once

#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "procgcn/models.hpp"

namespace procgcn {

struct TrainConfig {
  int max_epochs = 300;
  int patience = 30;
  double split_fraction = 0.8;
  bool early_stopping = true;
};

/// Table-style classification report: per-class precision/recall/F1/support,
/// accuracy, macro and support-weighted F1, and the confusion matrix
/// (rows = true class, cols = predicted).
struct Metrics {
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;
};

Metrics classification_report(std::span<const int> y_true, std::span<const int> y_pred,
                              int n_classes);

/// Stops after `patience` consecutive epochs without the loss improving by
/// more than `min_delta`.
struct EarlyStopper {
  int patience = 30;
  double min_delta = 1e-6;
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int bad_epochs = 0;

  /// Returns true when `value` is an improvement.
  bool update(int epoch, double value) {
    if (best - value > min_delta) {
      best = value;
      best_epoch = epoch;
      bad_epochs = 0;
      return true;
    }
    ++bad_epochs;
    return false;
  }
  bool should_stop() const { return bad_epochs >= patience; }
};

struct EpochPoint {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double val_weighted_f1 = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochPoint> curve;
  int best_epoch = 0;  // 1-based
  double best_val_loss = std::numeric_limits<double>::infinity();
  Metrics best_metrics;
  double val_loss_std = 0.0;  // over epochs 1..stop
  bool pruned = false;
};

/// Per-class split: floor(fraction * n_c), at least 1, to train; the rest to
/// validation. Returns trace indices into the dataset.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_stratified(
    const Dataset& dataset, double fraction, std::uint64_t seed);

/// Return true to abort the trial.
using PruneHook = std::function<bool(int epoch, double val_loss)>;

/// The epoch loop: seeded shuffling, task loss + L1, optimizer and scheduler
/// stepping, per-epoch validation, early stopping on val loss, and parameter
/// restoration from the best epoch (batch-norm running stats included).
TrainResult train_model(Model& model, std::span<const GraphInstance> train,
                        std::span<const GraphInstance> val, const TrainConfig& config,
                        std::uint64_t seed, const PruneHook& prune_hook = {});

Metrics evaluate_model(Model& model, std::span<const GraphInstance> graphs);
double evaluate_loss(Model& model, std::span<const GraphInstance> graphs);
std::vector<int> predict(Model& model, std::span<const GraphInstance> graphs);

void write_curves_csv(const std::string& path, const std::vector<EpochPoint>& curve);

}  // namespace procgcn
