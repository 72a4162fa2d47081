#include "procgcn/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

namespace procgcn {

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  return nlohmann::json::parse(in);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

AttributeSchema schema_from_json(const nlohmann::json& j) {
  AttributeSchema a;
  a.name = j.at("name").get<std::string>();
  a.level = j.at("level").get<std::string>() == "graph" ? AttrLevel::graph : AttrLevel::node;
  a.kind = j.at("kind").get<std::string>() == "numeric" ? AttrKind::numeric
                                                        : AttrKind::categorical;
  const std::string scope = j.value("scope", "universal");
  a.scope = scope == "specific" ? AttrScope::specific
            : scope == "key"    ? AttrScope::key
                                : AttrScope::universal;
  if (j.contains("applies_when")) {
    Applicability app;
    app.attr = j["applies_when"].at("attr").get<std::string>();
    app.values = j["applies_when"].at("values").get<std::vector<std::string>>();
    a.applicability = std::move(app);
  }
  return a;
}

nlohmann::json schema_to_json(const AttributeSchema& a) {
  nlohmann::json j;
  j["name"] = a.name;
  j["level"] = a.level == AttrLevel::graph ? "graph" : "node";
  j["kind"] = a.kind == AttrKind::numeric ? "numeric" : "categorical";
  j["scope"] = a.scope == AttrScope::specific ? "specific"
               : a.scope == AttrScope::key    ? "key"
                                              : "universal";
  if (a.applicability)
    j["applies_when"] = {{"attr", a.applicability->attr},
                         {"values", a.applicability->values}};
  return j;
}

nlohmann::json graph_to_json(const GraphInstance& g) {
  nlohmann::json j;
  j["n"] = g.n;
  j["d"] = g.d;
  j["node_feats"] = g.node_feats;
  j["node_mask"] = g.node_mask;
  j["edge_weights"] = g.edge_weights;
  j["graph_vec"] = g.graph_vec;
  j["label"] = g.label;
  j["activity_ids"] = g.activity_ids;
  if (g.d_pseudo > 0) {
    j["d_pseudo"] = g.d_pseudo;
    j["pseudo_feats"] = g.pseudo_feats;
  }
  return j;
}

GraphInstance graph_from_json(const nlohmann::json& j) {
  GraphInstance g;
  g.n = j.at("n").get<std::size_t>();
  g.d = j.at("d").get<std::size_t>();
  g.node_feats = j.at("node_feats").get<std::vector<double>>();
  g.node_mask = j.at("node_mask").get<std::vector<std::uint8_t>>();
  g.edge_weights = j.at("edge_weights").get<std::vector<double>>();
  g.graph_vec = j.at("graph_vec").get<std::vector<double>>();
  g.label = j.at("label").get<int>();
  g.activity_ids = j.at("activity_ids").get<std::vector<int>>();
  if (j.contains("d_pseudo")) {
    g.d_pseudo = j["d_pseudo"].get<std::size_t>();
    g.pseudo_feats = j.at("pseudo_feats").get<std::vector<double>>();
  }
  for (std::size_t k = 0; k + 1 < g.n; ++k) {
    g.edge_src.push_back(static_cast<int>(k));
    g.edge_dst.push_back(static_cast<int>(k + 1));
  }
  return g;
}

Dataset load_dataset(const RunConfig& config) {
  std::vector<AttributeSchema> schema = config.schema;
  bool has_key = false;
  for (const auto& a : schema) has_key = has_key || a.scope == AttrScope::key;
  if (!has_key)
    schema.insert(schema.begin(),
                  {"activity", AttrLevel::node, AttrKind::categorical, AttrScope::key, {}});
  return load_csv(config.dataset_path, std::move(schema), config.label_column);
}

struct Artifacts {
  PreparedData data;
};

std::string artifact_path(const RunConfig& config, const char* name) {
  return (fs::path(config.out_dir) / name).string();
}

Artifacts load_artifacts(const RunConfig& config) {
  const std::string graphs_path = artifact_path(config, "graphs.json");
  if (!fs::exists(graphs_path))
    throw ConfigError("missing prepared artifacts in " + config.out_dir + "; run `prepare` first");

  Artifacts art;
  art.data.encoder = EncoderState::from_json(read_json(artifact_path(config, "encoder.json")));
  auto scaler = read_json(artifact_path(config, "scaler.json"));
  art.data.scaler = {scaler.at("min").get<double>(), scaler.at("max").get<double>()};
  const std::string binning_path = artifact_path(config, "binning.json");
  if (fs::exists(binning_path)) {
    auto j = read_json(binning_path);
    art.data.binning = DurationBinning::from_json(j.at("binning"));
    art.data.corpus = TfidfCorpus::from_json(j.at("corpus"));
  }
  auto split = read_json(artifact_path(config, "split.json"));
  art.data.class_names = split.at("class_names").get<std::vector<std::string>>();
  art.data.train_index = split.at("train_index").get<std::vector<std::size_t>>();
  art.data.val_index = split.at("val_index").get<std::vector<std::size_t>>();
  art.data.has_durations = split.at("has_durations").get<bool>();

  auto graphs = read_json(graphs_path);
  for (const auto& g : graphs.at("train")) art.data.train_graphs.push_back(graph_from_json(g));
  for (const auto& g : graphs.at("val")) art.data.val_graphs.push_back(graph_from_json(g));
  art.data.dims = Dims::from_json(graphs.at("dims"));
  return art;
}

std::string model_tag(const RunConfig::ModelChoice& mc) {
  return std::string(to_string(mc.arch)) + "_" + to_string(mc.conv);
}

}  // namespace

RunConfig RunConfig::load(const std::string& path) {
  nlohmann::json j = read_json(path);
  RunConfig c;
  c.dataset_path = j.at("dataset").get<std::string>();
  c.label_column = j.value("label_column", c.label_column);
  if (j.contains("schema"))
    for (const auto& a : j["schema"]) c.schema.push_back(schema_from_json(a));
  if (j.contains("architectures")) {
    for (const auto& m : j["architectures"])
      c.architectures.push_back({arch_from_string(m.at("arch").get<std::string>()),
                                 conv_kind_from_string(m.at("conv").get<std::string>())});
  }
  c.budget = j.value("budget", c.budget);
  if (j.contains("train")) {
    const auto& t = j["train"];
    c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
    c.train.patience = t.value("patience", c.train.patience);
    c.train.split_fraction = t.value("split_fraction", c.train.split_fraction);
  }
  if (j.contains("binning")) {
    const auto& b = j["binning"];
    c.binning.t_cut_s = b.value("t_cut_s", c.binning.t_cut_s);
    c.binning.n_quantile = b.value("n_quantile", c.binning.n_quantile);
    c.binning.max_iterations = b.value("max_iterations", c.binning.max_iterations);
    c.binning.balance_tolerance = b.value("balance_tolerance", c.binning.balance_tolerance);
    c.binning.round_unit_s = b.value("round_unit_s", c.binning.round_unit_s);
  }
  if (j.contains("dataset_kind") && j["dataset_kind"].get<std::string>() != "auto")
    c.dataset_kind = j["dataset_kind"].get<std::string>() == "imbalanced"
                         ? DatasetKind::imbalanced
                         : DatasetKind::balanced;
  c.imbalance_threshold = j.value("imbalance_threshold", c.imbalance_threshold);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  return c;
}

void cmd_prepare(const RunConfig& config) {
  Dataset dataset = load_dataset(config);

  bool wants_pseudo = false;
  for (const auto& mc : config.architectures)
    wants_pseudo = wants_pseudo || mc.arch == Arch::two_level_pseudo;

  PrepareOptions opts;
  opts.split_fraction = config.train.split_fraction;
  opts.binning = config.binning;
  PreparedData data = prepare_data(dataset, opts, Rng::mix(config.seed, "prepare"));

  if (wants_pseudo && !data.has_durations)
    throw ConfigError("pseudo-embedding architecture requested but the log has zero durations");

  fs::create_directories(config.out_dir);
  write_json(artifact_path(config, "encoder.json"), data.encoder.to_json());
  write_json(artifact_path(config, "scaler.json"),
             {{"min", data.scaler.min}, {"max", data.scaler.max}});
  if (data.binning) {
    write_json(artifact_path(config, "binning.json"),
               {{"binning", data.binning->to_json()}, {"corpus", data.corpus->to_json()}});
  }

  nlohmann::json split;
  split["class_names"] = data.class_names;
  split["train_index"] = data.train_index;
  split["val_index"] = data.val_index;
  split["has_durations"] = data.has_durations;
  nlohmann::json train_cases = nlohmann::json::array(), val_cases = nlohmann::json::array();
  for (auto i : data.train_index) train_cases.push_back(dataset.traces[i].case_id);
  for (auto i : data.val_index) val_cases.push_back(dataset.traces[i].case_id);
  split["train_cases"] = std::move(train_cases);
  split["val_cases"] = std::move(val_cases);
  write_json(artifact_path(config, "split.json"), split);

  nlohmann::json graphs;
  graphs["dims"] = data.dims.to_json();
  nlohmann::json train_g = nlohmann::json::array(), val_g = nlohmann::json::array();
  for (const auto& g : data.train_graphs) train_g.push_back(graph_to_json(g));
  for (const auto& g : data.val_graphs) val_g.push_back(graph_to_json(g));
  graphs["train"] = std::move(train_g);
  graphs["val"] = std::move(val_g);
  write_json(artifact_path(config, "graphs.json"), graphs);

  std::cout << "prepared " << data.train_graphs.size() << " train / " << data.val_graphs.size()
            << " val graphs, d_node=" << data.dims.d_node << ", d_graph=" << data.dims.d_graph
            << ", d_pseudo=" << data.dims.d_pseudo << "\n";
  for (const auto& w : dataset.warnings) std::cerr << "warning: " << w << "\n";
}

void cmd_tune(const RunConfig& config, int jobs) {
  if (config.architectures.empty())
    throw ConfigError("config lists no architectures to tune");
  Artifacts art = load_artifacts(config);

  for (const auto& mc : config.architectures) {
    if (mc.arch == Arch::two_level_pseudo && !art.data.binning)
      throw ConfigError("pseudo-embedding architecture requested but no binning was prepared");

    const std::string tag = model_tag(mc);
    const fs::path model_dir = fs::path(config.out_dir) / tag;
    fs::create_directories(model_dir / "curves");

    TuneConfig tc;
    tc.train = config.train;
    tc.jobs = jobs;
    tc.space = SearchSpace{};
    tc.kind_override = config.dataset_kind;
    tc.imbalance_threshold = config.imbalance_threshold;
    tc.curves_dir = (model_dir / "curves").string();

    TuneResult result = tune(art.data, mc.arch, mc.conv, config.budget, tc,
                             Rng::mix(config.seed, "tune"));
    write_ledger((model_dir / "ledger.jsonl").string(), result.trials);

    const Trial& best = result.trials[result.best_index];
    auto [model, retrain] = retrain_best(best, art.data, config.train,
                                         Rng::mix(config.seed, "retrain"));
    save_checkpoint((model_dir / "checkpoint.json").string(), model, art.data.class_names,
                    "../encoder.json", art.data.binning ? "../binning.json" : "");
    write_curves_csv((model_dir / "retrain_curves.csv").string(), retrain.curve);

    std::cout << tag << ": best trial " << best.id << " (" << to_string(result.kind)
              << " selection), accuracy=" << best.keys.accuracy
              << ", weighted_f1=" << best.keys.weighted_f1 << ", loss=" << best.keys.loss
              << ", loss_std=" << best.keys.loss_std << "\n";
  }
}

void cmd_train(const RunConfig& config, const std::string& hp_path) {
  Artifacts art = load_artifacts(config);
  HyperParams hp = HyperParams::from_json(read_json(hp_path));

  Model model = build_model(hp, art.data.dims, static_cast<int>(art.data.class_names.size()),
                            Rng::mix(config.seed, "train_init"));
  TrainResult res = train_model(model, art.data.train_graphs, art.data.val_graphs, config.train,
                                Rng::mix(config.seed, "train"));

  fs::create_directories(config.out_dir);
  save_checkpoint(artifact_path(config, "checkpoint.json"), model, art.data.class_names,
                  "encoder.json", art.data.binning ? "binning.json" : "");
  write_curves_csv(artifact_path(config, "curves.csv"), res.curve);
  std::cout << "best epoch " << res.best_epoch << ", val_loss=" << res.best_val_loss
            << ", accuracy=" << res.best_metrics.accuracy
            << ", weighted_f1=" << res.best_metrics.weighted_f1 << "\n";
}

void cmd_evaluate(const RunConfig& config, const std::string& checkpoint_path,
                  const std::string& metrics_out) {
  LoadedCheckpoint lc = load_checkpoint(checkpoint_path);
  const fs::path base = fs::path(checkpoint_path).parent_path();

  EncoderState encoder =
      EncoderState::from_json(read_json((base / lc.encoder_ref).lexically_normal().string()));
  std::optional<DurationBinning> binning;
  std::optional<TfidfCorpus> corpus;
  if (!lc.binning_ref.empty()) {
    auto j = read_json((base / lc.binning_ref).lexically_normal().string());
    binning = DurationBinning::from_json(j.at("binning"));
    corpus = TfidfCorpus::from_json(j.at("corpus"));
  }
  // the weight scaler artifact sits next to the encoder
  auto scaler_json =
      read_json((base / lc.encoder_ref).parent_path().append("scaler.json").string());
  WeightScaler scaler{scaler_json.at("min").get<double>(), scaler_json.at("max").get<double>()};

  Dataset dataset = load_dataset(config);
  auto graphs = encode_graphs(dataset, encoder, scaler,
                              lc.model.hp().arch == Arch::two_level_pseudo ? binning : std::nullopt,
                              lc.model.hp().arch == Arch::two_level_pseudo ? corpus : std::nullopt);

  Metrics m = evaluate_model(lc.model, graphs);

  nlohmann::json j;
  j["class_names"] = lc.class_names;
  j["accuracy"] = m.accuracy;
  j["macro_f1"] = m.macro_f1;
  j["weighted_f1"] = m.weighted_f1;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["support"] = m.support;
  j["confusion"] = m.confusion;
  write_json(metrics_out, j);
  std::cout << "accuracy=" << m.accuracy << ", weighted_f1=" << m.weighted_f1 << "\n";
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void report_metrics(const nlohmann::json& j, const std::string& out_dir) {
  const auto names = j.at("class_names").get<std::vector<std::string>>();
  const auto precision = j.at("precision").get<std::vector<double>>();
  const auto recall = j.at("recall").get<std::vector<double>>();
  const auto f1 = j.at("f1").get<std::vector<double>>();
  const auto support = j.at("support").get<std::vector<std::size_t>>();
  std::size_t total = 0;
  for (auto s : support) total += s;

  std::ofstream csv(fs::path(out_dir) / "report.csv");
  csv << "class,precision,recall,f1,support\n";
  for (std::size_t k = 0; k < names.size(); ++k)
    csv << names[k] << ',' << fixed4(precision[k]) << ',' << fixed4(recall[k]) << ','
        << fixed4(f1[k]) << ',' << support[k] << '\n';
  csv << "accuracy,,," << fixed4(j.at("accuracy").get<double>()) << ',' << total << '\n';
  csv << "macro avg,,," << fixed4(j.at("macro_f1").get<double>()) << ',' << total << '\n';
  csv << "weighted avg,,," << fixed4(j.at("weighted_f1").get<double>()) << ',' << total << '\n';

  std::size_t w = 12;
  for (const auto& n : names) w = std::max(w, n.size() + 2);
  std::ofstream txt(fs::path(out_dir) / "report.txt");
  auto cell = [](const std::string& s, std::size_t width) {
    return std::string(width > s.size() ? width - s.size() : 0, ' ') + s;
  };
  auto row = [&](const std::string& name, const std::string& p, const std::string& r,
                 const std::string& f, const std::string& s) {
    txt << cell(name, w) << cell(p, 11) << cell(r, 9) << cell(f, 9) << cell(s, 9) << '\n';
  };
  row("", "precision", "recall", "f1", "support");
  txt << '\n';
  for (std::size_t k = 0; k < names.size(); ++k)
    row(names[k], fixed4(precision[k]), fixed4(recall[k]), fixed4(f1[k]),
        std::to_string(support[k]));
  txt << '\n';
  row("accuracy", "", "", fixed4(j.at("accuracy").get<double>()), std::to_string(total));
  row("macro avg", "", "", fixed4(j.at("macro_f1").get<double>()), std::to_string(total));
  row("weighted avg", "", "", fixed4(j.at("weighted_f1").get<double>()), std::to_string(total));
}

void report_ledger(const std::string& path, const std::string& out_dir) {
  auto trials = read_ledger(path);
  std::ofstream csv(fs::path(out_dir) / "leaderboard.csv");
  csv << "id,status,accuracy,weighted_f1,loss,loss_std,best_epoch,curves\n";
  for (const auto& t : trials) {
    csv << t.id << ',' << (t.status == TrialStatus::completed ? "completed"
                           : t.status == TrialStatus::pruned  ? "pruned"
                                                              : "failed");
    if (t.status == TrialStatus::completed)
      csv << ',' << fixed4(t.keys.accuracy) << ',' << fixed4(t.keys.weighted_f1) << ','
          << fixed4(t.keys.loss) << ',' << fixed4(t.keys.loss_std) << ',' << t.best_epoch;
    else
      csv << ",,,,,";
    csv << ',' << t.curves_ref << '\n';
  }
}

}  // namespace

void cmd_report(const std::string& metrics_or_ledger, const std::string& out_dir) {
  fs::create_directories(out_dir);
  if (metrics_or_ledger.size() > 6 &&
      metrics_or_ledger.substr(metrics_or_ledger.size() - 6) == ".jsonl") {
    report_ledger(metrics_or_ledger, out_dir);
  } else {
    report_metrics(read_json(metrics_or_ledger), out_dir);
  }
}

void cmd_synth(const SynthArgs& args) {
  Dataset ds;
  if (args.kind == "balanced") {
    ds = synth_balanced(args.n_per_class, args.n_classes, args.seed);
  } else if (args.kind == "imbalanced") {
    std::vector<double> ratios = args.ratios;
    if (ratios.empty())
      ratios = {0.4074, 0.2430, 0.1548, 0.1122, 0.0714, 0.0112};  // ~36:1 six-class mix
    ds = synth_imbalanced(args.total, ratios, args.seed);
  } else {
    throw ConfigError("synth kind must be balanced or imbalanced");
  }
  write_csv(ds, args.out_csv, "outcome");

  if (!args.out_config.empty()) {
    nlohmann::json j;
    j["dataset"] = args.out_csv;
    j["label_column"] = "outcome";
    nlohmann::json schema = nlohmann::json::array();
    for (const auto& a : ds.schema)
      if (a.scope != AttrScope::key) schema.push_back(schema_to_json(a));
    j["schema"] = std::move(schema);
    j["architectures"] = {{{"arch", "two_level"}, {"conv", "gcnconv"}}};
    j["budget"] = 25;
    j["train"] = {{"max_epochs", 300}, {"patience", 30}, {"split_fraction", 0.8}};
    j["seed"] = args.seed;
    j["out_dir"] = "out";
    write_json(args.out_config, j);
  }
  std::cout << "wrote " << ds.traces.size() << " traces to " << args.out_csv << "\n";
}

}  // namespace procgcn
