#include "procgcn/graphrep.hpp"

#include <algorithm>

namespace procgcn {

std::vector<double> raw_edge_weights(const CaseTrace& trace) {
  std::vector<double> weights;
  if (trace.events.size() < 2) return weights;
  weights.reserve(trace.events.size() - 1);
  for (std::size_t i = 0; i + 1 < trace.events.size(); ++i) {
    std::int64_t gap = trace.events[i + 1].start_ts - trace.events[i].start_ts;
    if (gap < 0)
      throw DataError("case " + trace.case_id + ": events not sorted by start time");
    weights.push_back(static_cast<double>(gap));
  }
  return weights;
}

WeightScaler fit_weight_scaler(std::span<const CaseTrace> train) {
  WeightScaler s;
  bool seen = false;
  for (const auto& trace : train) {
    for (double w : raw_edge_weights(trace)) {
      if (!seen) {
        s.min = s.max = w;
        seen = true;
      } else {
        s.min = std::min(s.min, w);
        s.max = std::max(s.max, w);
      }
    }
  }
  return s;
}

std::vector<double> scale_weights(std::span<const double> raw, const WeightScaler& scaler) {
  std::vector<double> out(raw.size());
  const double span = scaler.max - scaler.min;
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = span <= 0.0 ? 0.0 : std::clamp((raw[i] - scaler.min) / span, 0.0, 1.0);
  return out;
}

GraphInstance build_graph(const CaseTrace& trace, const EncoderState& encoder,
                          const WeightScaler& scaler, const PseudoProvider& pseudo_provider) {
  if (trace.events.empty()) throw DataError("case " + trace.case_id + " has no events");

  GraphInstance g;
  g.n = trace.events.size();
  g.d = encoder.node_dim();
  g.label = trace.label;
  g.node_feats.reserve(g.n * g.d);
  g.node_mask.reserve(g.n * g.d);
  g.activity_ids.reserve(g.n);
  for (const auto& ev : trace.events) {
    EncodedNode enc = encoder.encode_node(ev);
    g.node_feats.insert(g.node_feats.end(), enc.vector.begin(), enc.vector.end());
    for (bool b : enc.mask) g.node_mask.push_back(b ? 1 : 0);
    g.activity_ids.push_back(encoder.activity_id(ev));
  }
  g.graph_vec = encoder.encode_graph_attrs(trace);

  auto raw = raw_edge_weights(trace);
  g.edge_weights = scale_weights(raw, scaler);
  for (std::size_t k = 0; k + 1 < g.n; ++k) {
    g.edge_src.push_back(static_cast<int>(k));
    g.edge_dst.push_back(static_cast<int>(k + 1));
  }

  if (pseudo_provider) {
    std::size_t d_p = 0;
    g.pseudo_feats = pseudo_provider(trace, d_p);
    g.d_pseudo = d_p;
    if (g.pseudo_feats.size() != g.n * g.d_pseudo)
      throw DataError("pseudo feature matrix has wrong shape for case " + trace.case_id);
  }
  return g;
}

Batch make_batch(std::span<const GraphInstance> graphs) {
  if (graphs.empty()) throw DataError("cannot batch an empty graph list");

  Batch b;
  b.n_graphs = graphs.size();
  b.d = graphs[0].d;
  b.d_graph = graphs[0].graph_vec.size();
  b.d_pseudo = graphs[0].d_pseudo;
  for (const auto& g : graphs) {
    if (g.d != b.d || g.graph_vec.size() != b.d_graph || g.d_pseudo != b.d_pseudo)
      throw DataError("graphs in a batch must share feature dimensions");
    b.n_nodes += g.n;
  }

  b.node_feats.reserve(b.n_nodes * b.d);
  b.node_mask.reserve(b.n_nodes * b.d);
  b.graph_id.reserve(b.n_nodes);
  b.activity_ids.reserve(b.n_nodes);
  b.graph_vecs.reserve(b.n_graphs * b.d_graph);
  if (b.d_pseudo > 0) b.pseudo_feats.reserve(b.n_nodes * b.d_pseudo);

  int offset = 0;
  int gid = 0;
  for (const auto& g : graphs) {
    b.node_feats.insert(b.node_feats.end(), g.node_feats.begin(), g.node_feats.end());
    b.node_mask.insert(b.node_mask.end(), g.node_mask.begin(), g.node_mask.end());
    b.activity_ids.insert(b.activity_ids.end(), g.activity_ids.begin(), g.activity_ids.end());
    if (b.d_pseudo > 0)
      b.pseudo_feats.insert(b.pseudo_feats.end(), g.pseudo_feats.begin(), g.pseudo_feats.end());
    for (std::size_t e = 0; e < g.edge_src.size(); ++e) {
      b.edge_src.push_back(g.edge_src[e] + offset);
      b.edge_dst.push_back(g.edge_dst[e] + offset);
      b.edge_weights.push_back(g.edge_weights[e]);
    }
    for (std::size_t i = 0; i < g.n; ++i) b.graph_id.push_back(gid);
    b.graph_vecs.insert(b.graph_vecs.end(), g.graph_vec.begin(), g.graph_vec.end());
    b.labels.push_back(g.label);
    b.sizes.push_back(g.n);
    offset += static_cast<int>(g.n);
    ++gid;
  }
  return b;
}

std::vector<GraphInstance> unbatch(const Batch& batch) {
  std::vector<GraphInstance> graphs;
  graphs.reserve(batch.n_graphs);
  std::size_t node_off = 0, edge_off = 0;
  for (std::size_t gi = 0; gi < batch.n_graphs; ++gi) {
    GraphInstance g;
    g.n = batch.sizes[gi];
    g.d = batch.d;
    g.d_pseudo = batch.d_pseudo;
    g.label = batch.labels[gi];
    g.node_feats.assign(batch.node_feats.begin() + static_cast<long>(node_off * batch.d),
                        batch.node_feats.begin() + static_cast<long>((node_off + g.n) * batch.d));
    g.node_mask.assign(batch.node_mask.begin() + static_cast<long>(node_off * batch.d),
                       batch.node_mask.begin() + static_cast<long>((node_off + g.n) * batch.d));
    g.activity_ids.assign(batch.activity_ids.begin() + static_cast<long>(node_off),
                          batch.activity_ids.begin() + static_cast<long>(node_off + g.n));
    if (batch.d_pseudo > 0)
      g.pseudo_feats.assign(
          batch.pseudo_feats.begin() + static_cast<long>(node_off * batch.d_pseudo),
          batch.pseudo_feats.begin() + static_cast<long>((node_off + g.n) * batch.d_pseudo));
    g.graph_vec.assign(batch.graph_vecs.begin() + static_cast<long>(gi * batch.d_graph),
                       batch.graph_vecs.begin() + static_cast<long>((gi + 1) * batch.d_graph));
    const std::size_t n_edges = g.n > 0 ? g.n - 1 : 0;
    for (std::size_t e = 0; e < n_edges; ++e) {
      g.edge_src.push_back(batch.edge_src[edge_off + e] - static_cast<int>(node_off));
      g.edge_dst.push_back(batch.edge_dst[edge_off + e] - static_cast<int>(node_off));
      g.edge_weights.push_back(batch.edge_weights[edge_off + e]);
    }
    node_off += g.n;
    edge_off += n_edges;
    graphs.push_back(std::move(g));
  }
  return graphs;
}

}  // namespace procgcn
