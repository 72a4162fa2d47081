#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "procgcn/eventlog.hpp"

namespace procgcn {

struct BinningConfig {
  std::int64_t t_cut_s = 300;       // durations below get one bin per distinct value
  int n_quantile = 24;              // target bin count for durations >= t_cut_s
  int max_iterations = 25;          // cap on balance-search evaluations
  double balance_tolerance = 0.25;  // accept when max/min bin frequency <= 1 + tol
  std::int64_t round_unit_s = 60;   // durations rounded to this unit first (1 = off)
};

/// Fitted duration binning: exact bins for short durations, deduplicated
/// quantile intervals for long ones. Interval k covers [edge_{k-1}, edge_k),
/// the last one is unbounded above.
struct DurationBinning {
  std::int64_t t_cut_s = 0;
  int n_quantile = 0;
  std::int64_t round_unit_s = 1;
  std::vector<std::int64_t> unique_bins;  // sorted distinct rounded durations < t_cut
  std::vector<double> quantile_edges;     // strictly increasing interior edges
  bool has_quantile_region = false;
  double balance_ratio = 1.0;  // max/min quantile-bin frequency achieved
  int iterations = 0;          // configurations evaluated during fitting

  std::size_t quantile_bin_count() const {
    return has_quantile_region ? quantile_edges.size() + 1 : 0;
  }
  std::size_t n_bins() const { return unique_bins.size() + quantile_bin_count(); }

  nlohmann::json to_json() const;
  static DurationBinning from_json(const nlohmann::json& j);
};

DurationBinning fit_binning(std::span<const std::int64_t> durations, const BinningConfig& config);

/// Total over nonnegative durations: exact unique-bin match, else the
/// containing quantile interval, else the nearest unique bin (ties toward the
/// lower one).
int assign_bin(std::int64_t duration_s, const DurationBinning& binning);

/// Document-frequency table over (activity, bin) terms, one document per
/// graph, computed on the training split only.
struct TfidfCorpus {
  std::size_t n_docs = 0;
  std::map<std::pair<std::string, int>, std::size_t> df;

  /// ln((1 + N) / (1 + df)) + 1, smoothed so unseen terms stay finite.
  double idf(const std::string& activity, int bin) const;

  nlohmann::json to_json() const;
  static TfidfCorpus from_json(const nlohmann::json& j);
};

TfidfCorpus fit_corpus(std::span<const CaseTrace> train, const DurationBinning& binning);

/// Node-wise pseudo-embedding rows for one graph: row i holds the graph's
/// tf-idf weights for node i's activity across every bin column. Returns an
/// n x n_bins row-major matrix.
std::vector<double> pseudo_matrix(const CaseTrace& trace, const DurationBinning& binning,
                                  const TfidfCorpus& corpus);

/// Convenience: fit the corpus over `traces` and transform each of them.
std::vector<std::vector<double>> build_pseudo_matrices(std::span<const CaseTrace> traces,
                                                       const DurationBinning& binning);

}  // namespace procgcn
