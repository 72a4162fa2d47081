#include "procgcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "procgcn/optim.hpp"

namespace procgcn {

Metrics classification_report(std::span<const int> y_true, std::span<const int> y_pred,
                              int n_classes) {
  if (y_true.size() != y_pred.size()) throw Error("prediction/label length mismatch");
  const auto c = static_cast<std::size_t>(n_classes);
  Metrics m;
  m.confusion.assign(c, std::vector<std::size_t>(c, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= n_classes || y_pred[i] < 0 || y_pred[i] >= n_classes)
      throw Error("label out of range in classification report");
    ++m.confusion[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
  }

  m.precision.assign(c, 0.0);
  m.recall.assign(c, 0.0);
  m.f1.assign(c, 0.0);
  m.support.assign(c, 0);
  std::size_t correct = 0;
  double weighted = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t tp = m.confusion[k][k];
    std::size_t fp = 0, fn = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == k) continue;
      fp += m.confusion[j][k];
      fn += m.confusion[k][j];
    }
    m.support[k] = tp + fn;
    correct += tp;
    m.precision[k] = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.recall[k] = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double pr = m.precision[k] + m.recall[k];
    m.f1[k] = pr == 0.0 ? 0.0 : 2.0 * m.precision[k] * m.recall[k] / pr;
    m.macro_f1 += m.f1[k];
    weighted += m.f1[k] * static_cast<double>(m.support[k]);
  }
  m.macro_f1 /= static_cast<double>(c);
  const double n = static_cast<double>(y_true.size());
  m.accuracy = n == 0.0 ? 0.0 : static_cast<double>(correct) / n;
  m.weighted_f1 = n == 0.0 ? 0.0 : weighted / n;
  return m;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_stratified(
    const Dataset& dataset, double fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dataset.traces.size(); ++i)
    by_class[dataset.traces[i].label].push_back(i);

  std::vector<std::size_t> train, val;
  Rng rng(seed, "split");
  for (auto& [label, indices] : by_class) {
    if (indices.size() < 2)
      throw DataError("class " + std::to_string(label) + " has fewer than 2 members");
    rng.shuffle(indices);
    auto n_train = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(indices.size())));
    n_train = std::max<std::size_t>(1, std::min(n_train, indices.size() - 1));
    for (std::size_t k = 0; k < indices.size(); ++k)
      (k < n_train ? train : val).push_back(indices[k]);
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

namespace {

std::vector<Batch> make_eval_batches(std::span<const GraphInstance> graphs,
                                     std::size_t chunk = 256) {
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < graphs.size(); i += chunk)
    batches.push_back(make_batch(graphs.subspan(i, std::min(chunk, graphs.size() - i))));
  return batches;
}

struct EvalOutcome {
  double loss = 0.0;
  std::vector<int> y_true, y_pred;
};

EvalOutcome run_eval(Model& model, const std::vector<Batch>& batches, LossKind loss_kind) {
  EvalOutcome out;
  ad::Tape tape;
  tape.set_grad_enabled(false);
  Rng rng(0);  // dropout is inert in eval mode
  double weighted = 0.0;
  std::size_t total = 0;
  for (const auto& b : batches) {
    tape.clear();
    ad::Tensor logits = model.forward(tape, b, /*training=*/false, rng);
    ad::Tensor loss = task_loss(logits, b.labels, loss_kind);
    weighted += loss.scalar() * static_cast<double>(b.n_graphs);
    total += b.n_graphs;
    auto lv = logits.value();
    const std::size_t c = logits.cols();
    for (std::size_t g = 0; g < b.n_graphs; ++g) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (lv[g * c + j] > lv[g * c + best]) best = j;
      out.y_pred.push_back(static_cast<int>(best));
      out.y_true.push_back(b.labels[g]);
    }
  }
  out.loss = total == 0 ? 0.0 : weighted / static_cast<double>(total);
  return out;
}

double population_std(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace

TrainResult train_model(Model& model, std::span<const GraphInstance> train,
                        std::span<const GraphInstance> val, const TrainConfig& config,
                        std::uint64_t seed, const PruneHook& prune_hook) {
  if (train.empty() || val.empty()) throw DataError("train and validation splits must be non-empty");
  const HyperParams& hp = model.hp();
  const auto batch_size = static_cast<std::size_t>(hp.batch_size);
  const long batches_per_epoch =
      static_cast<long>((train.size() + batch_size - 1) / batch_size);

  auto params = model.parameters();
  Optimizer optimizer(hp.optimizer, params);
  Scheduler scheduler(hp.scheduler, hp.optimizer.lr, batches_per_epoch);
  if (scheduler.per_batch()) optimizer.set_lr(scheduler.lr_at(0));

  Rng shuffle_rng(seed, "shuffle");
  Rng dropout_rng(seed, "dropout");

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto val_batches = make_eval_batches(val);

  TrainResult result;
  EarlyStopper stopper{config.patience};
  Model::State best_state = model.state();
  ad::Tape tape;
  long global_step = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (!scheduler.per_batch() && !scheduler.needs_metric())
      optimizer.set_lr(scheduler.lr_at(epoch - 1));

    shuffle_rng.shuffle(order);
    double train_loss = 0.0;
    std::size_t seen = 0;
    std::vector<GraphInstance> chunk;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      chunk.clear();
      for (std::size_t k = start; k < std::min(start + batch_size, order.size()); ++k)
        chunk.push_back(train[order[k]]);
      Batch batch = make_batch(chunk);

      if (scheduler.per_batch()) optimizer.set_lr(scheduler.lr_at(global_step));
      tape.clear();
      ad::Tensor logits = model.forward(tape, batch, /*training=*/true, dropout_rng);
      ad::Tensor loss = task_loss(logits, batch.labels, hp.loss);
      if (hp.l1 > 0.0) loss = ad::add(loss, l1_penalty(tape, params, hp.l1));
      tape.backward(loss);
      tape.collect_grads();
      optimizer.step();
      ++global_step;

      train_loss += loss.scalar() * static_cast<double>(batch.n_graphs);
      seen += batch.n_graphs;
    }
    train_loss /= static_cast<double>(seen);

    EvalOutcome ev = run_eval(model, val_batches, hp.loss);
    Metrics metrics = classification_report(ev.y_true, ev.y_pred, model.n_classes());
    if (scheduler.needs_metric()) optimizer.set_lr(scheduler.observe(ev.loss));

    result.curve.push_back({epoch, train_loss, ev.loss, metrics.accuracy, metrics.weighted_f1,
                            optimizer.lr()});

    if (stopper.update(epoch, ev.loss)) {
      best_state = model.state();
      result.best_epoch = epoch;
      result.best_val_loss = ev.loss;
      result.best_metrics = std::move(metrics);
    }
    if (prune_hook && prune_hook(epoch, ev.loss)) {
      result.pruned = true;
      break;
    }
    if (config.early_stopping && stopper.should_stop()) break;
  }

  model.load_state(best_state);
  std::vector<double> val_losses;
  val_losses.reserve(result.curve.size());
  for (const auto& p : result.curve) val_losses.push_back(p.val_loss);
  result.val_loss_std = population_std(val_losses);
  return result;
}

Metrics evaluate_model(Model& model, std::span<const GraphInstance> graphs) {
  auto batches = make_eval_batches(graphs);
  EvalOutcome ev = run_eval(model, batches, model.hp().loss);
  return classification_report(ev.y_true, ev.y_pred, model.n_classes());
}

double evaluate_loss(Model& model, std::span<const GraphInstance> graphs) {
  auto batches = make_eval_batches(graphs);
  return run_eval(model, batches, model.hp().loss).loss;
}

std::vector<int> predict(Model& model, std::span<const GraphInstance> graphs) {
  auto batches = make_eval_batches(graphs);
  return run_eval(model, batches, model.hp().loss).y_pred;
}

void write_curves_csv(const std::string& path, const std::vector<EpochPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write curves: " + path);
  out << "epoch,train_loss,val_loss,val_accuracy,val_weighted_f1,lr\n";
  out.precision(17);
  for (const auto& p : curve)
    out << p.epoch << ',' << p.train_loss << ',' << p.val_loss << ',' << p.val_accuracy << ','
        << p.val_weighted_f1 << ',' << p.lr << '\n';
}

}  // namespace procgcn
