#include "procgcn/pseudoembed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "procgcn/encode.hpp"

namespace procgcn {

namespace {

std::int64_t round_duration(std::int64_t d, std::int64_t unit) {
  if (unit <= 1) return d;
  return (d + unit / 2) / unit * unit;  // round half up
}

std::vector<std::int64_t> rounded_sorted(std::span<const std::int64_t> durations,
                                         std::int64_t unit) {
  std::vector<std::int64_t> out;
  out.reserve(durations.size());
  for (auto d : durations) {
    if (d < 0) throw DataError("negative duration in binning input");
    out.push_back(round_duration(d, unit));
  }
  std::sort(out.begin(), out.end());
  return out;
}

double quantile_linear(const std::vector<std::int64_t>& sorted, double p) {
  if (sorted.size() == 1) return static_cast<double>(sorted[0]);
  double pos = p * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return static_cast<double>(sorted.back());
  return static_cast<double>(sorted[lo]) +
         frac * static_cast<double>(sorted[lo + 1] - sorted[lo]);
}

struct BinEval {
  std::vector<std::int64_t> unique_bins;
  std::vector<double> edges;
  bool has_region = false;
  double ratio = 1.0;  // max/min quantile-bin frequency; +inf on an empty bin
};

BinEval evaluate_binning(const std::vector<std::int64_t>& all_sorted, std::int64_t t_cut,
                         int n_quantile) {
  BinEval ev;
  std::vector<std::int64_t> longs;
  for (auto d : all_sorted) {
    if (d < t_cut) {
      if (ev.unique_bins.empty() || ev.unique_bins.back() != d) ev.unique_bins.push_back(d);
    } else {
      longs.push_back(d);
    }
  }
  if (longs.empty()) return ev;

  ev.has_region = true;
  for (int k = 1; k < n_quantile; ++k) {
    double e = quantile_linear(longs, static_cast<double>(k) / n_quantile);
    // duplicates and edges that would leave the leading interval empty are dropped
    if (e > static_cast<double>(longs.front()) && (ev.edges.empty() || e > ev.edges.back()))
      ev.edges.push_back(e);
  }

  // left-closed intervals: a value on an edge belongs to the interval that
  // starts there
  std::vector<std::size_t> freq(ev.edges.size() + 1, 0);
  for (auto d : longs) {
    std::size_t idx = static_cast<std::size_t>(
        std::upper_bound(ev.edges.begin(), ev.edges.end(), static_cast<double>(d)) -
        ev.edges.begin());
    freq[idx]++;
  }
  auto [mn, mx] = std::minmax_element(freq.begin(), freq.end());
  ev.ratio = *mn == 0 ? std::numeric_limits<double>::infinity()
                      : static_cast<double>(*mx) / static_cast<double>(*mn);
  return ev;
}

}  // namespace

DurationBinning fit_binning(std::span<const std::int64_t> durations,
                            const BinningConfig& config) {
  if (durations.empty()) throw DataError("cannot fit binning on empty durations");
  if (config.t_cut_s <= 0) throw ConfigError("t_cut_s must be positive");
  if (config.n_quantile < 1) throw ConfigError("n_quantile must be >= 1");
  if (config.balance_tolerance <= 0.0 || config.balance_tolerance > 1.0)
    throw ConfigError("balance_tolerance must lie in (0, 1]");

  auto sorted = rounded_sorted(durations, config.round_unit_s);
  std::vector<std::int64_t> distinct(sorted);
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  struct Candidate {
    std::int64_t t_cut;
    int nq;
  };
  auto t_cut_up = [&](std::int64_t t) -> std::optional<std::int64_t> {
    auto it = std::upper_bound(distinct.begin(), distinct.end(), t);
    if (it == distinct.end()) return std::nullopt;
    return *it + 1;  // threshold just above the next distinct value
  };
  auto t_cut_down = [&](std::int64_t t) -> std::optional<std::int64_t> {
    auto it = std::lower_bound(distinct.begin(), distinct.end(), t);
    if (it == distinct.begin()) return std::nullopt;
    return *(it - 1);  // threshold at the previous distinct value
  };

  const double accept = 1.0 + config.balance_tolerance;
  std::set<std::pair<std::int64_t, int>> visited;
  int iterations = 0;

  Candidate current{config.t_cut_s, config.n_quantile};
  BinEval current_eval = evaluate_binning(sorted, current.t_cut, current.nq);
  visited.insert({current.t_cut, current.nq});
  ++iterations;

  Candidate best = current;
  BinEval best_eval = current_eval;

  while (best_eval.ratio > accept && iterations < config.max_iterations) {
    std::vector<Candidate> neighbors;
    if (auto up = t_cut_up(current.t_cut)) neighbors.push_back({*up, current.nq});
    if (auto down = t_cut_down(current.t_cut)) neighbors.push_back({*down, current.nq});
    neighbors.push_back({current.t_cut, current.nq + 1});
    if (current.nq > 1) neighbors.push_back({current.t_cut, current.nq - 1});

    bool moved = false;
    Candidate next{};
    BinEval next_eval;
    next_eval.ratio = std::numeric_limits<double>::infinity();
    for (const auto& cand : neighbors) {
      if (cand.t_cut <= 0) continue;
      if (!visited.insert({cand.t_cut, cand.nq}).second) continue;
      if (iterations >= config.max_iterations) break;
      BinEval ev = evaluate_binning(sorted, cand.t_cut, cand.nq);
      ++iterations;
      if (ev.ratio < next_eval.ratio) {
        next = cand;
        next_eval = ev;
        moved = true;
      }
    }
    if (!moved) break;
    current = next;
    current_eval = next_eval;
    if (current_eval.ratio < best_eval.ratio) {
      best = current;
      best_eval = current_eval;
    }
  }

  DurationBinning b;
  b.t_cut_s = best.t_cut;
  b.n_quantile = best.nq;
  b.round_unit_s = config.round_unit_s;
  b.unique_bins = std::move(best_eval.unique_bins);
  b.quantile_edges = std::move(best_eval.edges);
  b.has_quantile_region = best_eval.has_region;
  b.balance_ratio = best_eval.ratio;
  b.iterations = iterations;
  return b;
}

int assign_bin(std::int64_t duration_s, const DurationBinning& binning) {
  if (duration_s < 0) throw DataError("negative duration");
  const std::int64_t d = round_duration(duration_s, binning.round_unit_s);

  auto nearest_unique = [&]() -> int {
    // ties go to the lower bin
    int best = 0;
    std::int64_t best_dist = std::numeric_limits<std::int64_t>::max();
    for (std::size_t i = 0; i < binning.unique_bins.size(); ++i) {
      std::int64_t dist = std::abs(binning.unique_bins[i] - d);
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<int>(i);
      }
    }
    return best;
  };

  if (d < binning.t_cut_s) {
    auto it = std::lower_bound(binning.unique_bins.begin(), binning.unique_bins.end(), d);
    if (it != binning.unique_bins.end() && *it == d)
      return static_cast<int>(it - binning.unique_bins.begin());
    if (!binning.unique_bins.empty()) return nearest_unique();
    // no short durations were seen in training: fall through to the intervals
  }
  if (!binning.has_quantile_region) return nearest_unique();

  // left-closed, right-open intervals; the last is unbounded
  std::size_t idx = static_cast<std::size_t>(
      std::upper_bound(binning.quantile_edges.begin(), binning.quantile_edges.end(),
                       static_cast<double>(d)) -
      binning.quantile_edges.begin());
  return static_cast<int>(binning.unique_bins.size() + idx);
}

double TfidfCorpus::idf(const std::string& activity, int bin) const {
  auto it = df.find({activity, bin});
  const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + d)) + 1.0;
}

namespace {

std::map<std::pair<std::string, int>, std::size_t> term_counts(const CaseTrace& trace,
                                                               const DurationBinning& binning) {
  std::map<std::pair<std::string, int>, std::size_t> tf;
  for (const auto& ev : trace.events)
    ++tf[{ev.activity, assign_bin(event_duration(ev), binning)}];
  return tf;
}

}  // namespace

TfidfCorpus fit_corpus(std::span<const CaseTrace> train, const DurationBinning& binning) {
  TfidfCorpus corpus;
  corpus.n_docs = train.size();
  for (const auto& trace : train) {
    for (const auto& [term, _] : term_counts(trace, binning)) ++corpus.df[term];
  }
  return corpus;
}

std::vector<double> pseudo_matrix(const CaseTrace& trace, const DurationBinning& binning,
                                  const TfidfCorpus& corpus) {
  const std::size_t n = trace.events.size();
  const std::size_t n_bins = binning.n_bins();
  std::vector<double> mat(n * n_bins, 0.0);

  auto tf = term_counts(trace, binning);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& act = trace.events[i].activity;
    // the node's row carries the document's weights for its activity over
    // every bin column
    auto it = tf.lower_bound({act, 0});
    for (; it != tf.end() && it->first.first == act; ++it) {
      const int bin = it->first.second;
      mat[i * n_bins + static_cast<std::size_t>(bin)] =
          static_cast<double>(it->second) * corpus.idf(act, bin);
    }
  }
  return mat;
}

std::vector<std::vector<double>> build_pseudo_matrices(std::span<const CaseTrace> traces,
                                                       const DurationBinning& binning) {
  TfidfCorpus corpus = fit_corpus(traces, binning);
  std::vector<std::vector<double>> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(pseudo_matrix(t, binning, corpus));
  return out;
}

// --- serialization ----------------------------------------------------------

nlohmann::json DurationBinning::to_json() const {
  nlohmann::json j;
  j["t_cut_s"] = t_cut_s;
  j["n_quantile"] = n_quantile;
  j["round_unit_s"] = round_unit_s;
  j["unique_bins"] = unique_bins;
  j["quantile_edges"] = quantile_edges;
  j["has_quantile_region"] = has_quantile_region;
  j["balance_ratio"] = balance_ratio;
  j["iterations"] = iterations;
  return j;
}

DurationBinning DurationBinning::from_json(const nlohmann::json& j) {
  DurationBinning b;
  b.t_cut_s = j.at("t_cut_s").get<std::int64_t>();
  b.n_quantile = j.at("n_quantile").get<int>();
  b.round_unit_s = j.at("round_unit_s").get<std::int64_t>();
  b.unique_bins = j.at("unique_bins").get<std::vector<std::int64_t>>();
  b.quantile_edges = j.at("quantile_edges").get<std::vector<double>>();
  b.has_quantile_region = j.at("has_quantile_region").get<bool>();
  b.balance_ratio = j.at("balance_ratio").get<double>();
  b.iterations = j.at("iterations").get<int>();
  return b;
}

nlohmann::json TfidfCorpus::to_json() const {
  nlohmann::json j;
  j["n_docs"] = n_docs;
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [term, count] : df) terms.push_back({term.first, term.second, count});
  j["df"] = std::move(terms);
  return j;
}

TfidfCorpus TfidfCorpus::from_json(const nlohmann::json& j) {
  TfidfCorpus c;
  c.n_docs = j.at("n_docs").get<std::size_t>();
  for (const auto& t : j.at("df"))
    c.df[{t.at(0).get<std::string>(), t.at(1).get<int>()}] = t.at(2).get<std::size_t>();
  return c;
}

}  // namespace procgcn
