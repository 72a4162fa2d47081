#include <iostream>

#include <CLI11.hpp>

#include "procgcn/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"procgcn - self-tuning graph convolutional models for event-log outcome prediction"};
  app.require_subcommand(1);

  std::string config_path, hp_path, checkpoint_path, metrics_out = "metrics.json";
  std::string report_input, report_out = ".";
  int jobs = 1;
  long long seed_override = -1;
  std::string out_override;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run-config JSON")->required();
    cmd->add_option("--seed", seed_override, "override the config seed");
    cmd->add_option("--out", out_override, "override the config output directory");
  };

  auto load_config = [&]() {
    procgcn::RunConfig cfg = procgcn::RunConfig::load(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) cfg.out_dir = out_override;
    return cfg;
  };

  auto* prepare = app.add_subcommand("prepare", "fit encoders and cache encoded graphs");
  add_common(prepare);

  auto* tune = app.add_subcommand("tune", "hyperparameter search per requested model");
  add_common(tune);
  tune->add_option("--jobs", jobs, "parallel trials")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "train once with given hyperparameters");
  add_common(train);
  train->add_option("--hp", hp_path, "hyperparameters JSON")->required();

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a dataset");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
  evaluate->add_option("--metrics-out", metrics_out, "metrics JSON output path");

  auto* report = app.add_subcommand("report", "render metrics or a trial ledger as tables");
  report->add_option("--input", report_input, "metrics.json or ledger.jsonl")->required();
  report->add_option("--out", report_out, "output directory");

  procgcn::SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic event log CSV");
  synth->add_option("--kind", synth_args.kind, "balanced | imbalanced");
  synth->add_option("--n-per-class", synth_args.n_per_class, "traces per class (balanced)");
  synth->add_option("--classes", synth_args.n_classes, "class count (balanced)");
  synth->add_option("--total", synth_args.total, "total traces (imbalanced)");
  synth->add_option("--ratios", synth_args.ratios, "class ratios (imbalanced)");
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_option("--out-csv", synth_args.out_csv, "dataset CSV path");
  synth->add_option("--out-config", synth_args.out_config, "also write a run-config skeleton");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      procgcn::cmd_prepare(load_config());
    } else if (tune->parsed()) {
      procgcn::cmd_tune(load_config(), jobs);
    } else if (train->parsed()) {
      procgcn::cmd_train(load_config(), hp_path);
    } else if (evaluate->parsed()) {
      procgcn::cmd_evaluate(load_config(), checkpoint_path, metrics_out);
    } else if (report->parsed()) {
      procgcn::cmd_report(report_input, report_out);
    } else if (synth->parsed()) {
      procgcn::cmd_synth(synth_args);
    }
  } catch (const procgcn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
