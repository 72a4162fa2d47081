#pragma once

#include <optional>
#include <string>
#include <vector>

#include "procgcn/tuner.hpp"

namespace procgcn {

/// A single JSON document drives every command; all randomness flows from the
/// root seed through named substreams.
struct RunConfig {
  std::string dataset_path;
  std::string label_column = "outcome";
  std::vector<AttributeSchema> schema;  // the activity key attribute is implicit
  struct ModelChoice {
    Arch arch;
    ConvKind conv;
  };
  std::vector<ModelChoice> architectures;
  int budget = 25;
  TrainConfig train;
  BinningConfig binning;
  std::optional<DatasetKind> dataset_kind;  // unset = auto-classify
  double imbalance_threshold = 1.5;
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  static RunConfig load(const std::string& path);
};

/// prepare: fit encoder/scaler/binning on the training split and cache the
/// encoded graphs. Artifacts: encoder.json, scaler.json, binning.json,
/// split.json, graphs.json under the output directory.
void cmd_prepare(const RunConfig& config);

/// tune: one search per requested (architecture, conv) pair over prepared
/// artifacts; writes ledger.jsonl, per-trial curves, and a best checkpoint.
void cmd_tune(const RunConfig& config, int jobs);

/// train: single run with hyperparameters from a JSON file.
void cmd_train(const RunConfig& config, const std::string& hp_path);

/// evaluate: checkpoint x dataset -> metrics.json (classification report).
void cmd_evaluate(const RunConfig& config, const std::string& checkpoint_path,
                  const std::string& metrics_out);

/// report: render metrics.json as a classification-report table (CSV +
/// aligned text), or a ledger as a ranked leaderboard. No recomputation.
void cmd_report(const std::string& metrics_or_ledger, const std::string& out_dir);

struct SynthArgs {
  std::string kind = "balanced";  // balanced | imbalanced
  int n_per_class = 200;
  int n_classes = 3;
  int total = 2000;
  std::vector<double> ratios;
  std::uint64_t seed = 0;
  std::string out_csv = "synth.csv";
  std::string out_config;  // optional ready-to-run config skeleton
};

/// synth: generate a dataset CSV (plus a matching run-config) that
/// cmd_prepare can load directly.
void cmd_synth(const SynthArgs& args);

}  // namespace procgcn
