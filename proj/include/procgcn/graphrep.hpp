#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "procgcn/encode.hpp"
#include "procgcn/eventlog.hpp"

namespace procgcn {

/// One encoded trace as a weighted chain graph. Edge k connects node k to
/// node k+1; a single-event trace has no edges.
struct GraphInstance {
  std::size_t n = 0;       // nodes
  std::size_t d = 0;       // node feature width
  std::vector<double> node_feats;    // n x d, row-major
  std::vector<std::uint8_t> node_mask;  // n x d, 1 = valid
  std::vector<int> edge_src, edge_dst;  // the two rows of the 2 x (n-1) index
  std::vector<double> edge_weights;     // scaled to [0, 1]
  std::vector<double> graph_vec;
  int label = -1;
  std::vector<int> activity_ids;
  std::size_t d_pseudo = 0;
  std::vector<double> pseudo_feats;  // n x d_pseudo when d_pseudo > 0
};

/// Disjoint union of graphs with per-graph node offsets applied.
struct Batch {
  std::size_t n_nodes = 0, n_graphs = 0, d = 0, d_graph = 0, d_pseudo = 0;
  std::vector<double> node_feats;
  std::vector<std::uint8_t> node_mask;
  std::vector<int> edge_src, edge_dst;
  std::vector<double> edge_weights;
  std::vector<int> graph_id;  // node -> graph, nondecreasing
  std::vector<double> graph_vecs;  // n_graphs x d_graph
  std::vector<int> labels;
  std::vector<int> activity_ids;
  std::vector<double> pseudo_feats;
  std::vector<std::size_t> sizes;  // nodes per graph
};

/// Start-time gaps between consecutive events, in seconds. Simultaneous
/// events yield 0.
std::vector<double> raw_edge_weights(const CaseTrace& trace);

struct WeightScaler {
  double min = 0.0;
  double max = 0.0;
};

/// Fitted over every edge of the training split (global, not per-graph).
WeightScaler fit_weight_scaler(std::span<const CaseTrace> train);

/// Min-max scaling clamped to [0, 1]; a degenerate range maps everything to 0.
std::vector<double> scale_weights(std::span<const double> raw, const WeightScaler& scaler);

using PseudoProvider = std::function<std::vector<double>(const CaseTrace&, std::size_t& d_out)>;

GraphInstance build_graph(const CaseTrace& trace, const EncoderState& encoder,
                          const WeightScaler& scaler,
                          const PseudoProvider& pseudo_provider = {});

Batch make_batch(std::span<const GraphInstance> graphs);

std::vector<GraphInstance> unbatch(const Batch& batch);

}  // namespace procgcn
