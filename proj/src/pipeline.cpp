#include "procgcn/pipeline.hpp"

namespace procgcn {

namespace {

bool any_nonzero_duration(const Dataset& dataset) {
  for (const auto& t : dataset.traces)
    for (const auto& ev : t.events)
      if (event_duration(ev) > 0) return true;
  return false;
}

PseudoProvider make_provider(const DurationBinning& binning, const TfidfCorpus& corpus) {
  return [&binning, &corpus](const CaseTrace& trace, std::size_t& d_out) {
    d_out = binning.n_bins();
    return pseudo_matrix(trace, binning, corpus);
  };
}

}  // namespace

PreparedData prepare_data(const Dataset& dataset, const PrepareOptions& options,
                          std::uint64_t seed) {
  PreparedData p;
  p.class_names = dataset.class_names;
  std::tie(p.train_index, p.val_index) =
      split_stratified(dataset, options.split_fraction, seed);

  std::vector<CaseTrace> train_traces;
  train_traces.reserve(p.train_index.size());
  for (auto i : p.train_index) train_traces.push_back(dataset.traces[i]);

  p.encoder = EncoderState::fit(train_traces, dataset.schema);
  p.scaler = fit_weight_scaler(train_traces);
  p.has_durations = any_nonzero_duration(dataset);

  PseudoProvider provider;
  if (options.build_pseudo && p.has_durations) {
    std::vector<std::int64_t> durations;
    for (const auto& t : train_traces)
      for (const auto& ev : t.events) durations.push_back(event_duration(ev));
    p.binning = fit_binning(durations, options.binning);
    p.corpus = fit_corpus(train_traces, *p.binning);
    provider = make_provider(*p.binning, *p.corpus);
  }

  for (auto i : p.train_index)
    p.train_graphs.push_back(build_graph(dataset.traces[i], p.encoder, p.scaler, provider));
  for (auto i : p.val_index)
    p.val_graphs.push_back(build_graph(dataset.traces[i], p.encoder, p.scaler, provider));

  p.dims.d_node = p.encoder.node_dim();
  p.dims.d_graph = p.encoder.graph_dim();
  p.dims.d_pseudo = p.binning ? p.binning->n_bins() : 0;
  p.dims.activity_block = p.encoder.activity_block_width();
  p.dims.activity_vocab = p.encoder.activity_vocab_size();
  return p;
}

std::vector<GraphInstance> encode_graphs(const Dataset& dataset, const EncoderState& encoder,
                                         const WeightScaler& scaler,
                                         const std::optional<DurationBinning>& binning,
                                         const std::optional<TfidfCorpus>& corpus) {
  PseudoProvider provider;
  if (binning && corpus) provider = make_provider(*binning, *corpus);
  std::vector<GraphInstance> graphs;
  graphs.reserve(dataset.traces.size());
  for (const auto& t : dataset.traces)
    graphs.push_back(build_graph(t, encoder, scaler, provider));
  return graphs;
}

}  // namespace procgcn
