#pragma once

#include <optional>

#include "procgcn/graphrep.hpp"
#include "procgcn/pseudoembed.hpp"
#include "procgcn/trainer.hpp"

namespace procgcn {

/// Everything fitted on the training split plus the encoded graphs for both
/// splits. Immutable after preparation; shared read-only across trials.
struct PreparedData {
  std::vector<std::string> class_names;
  EncoderState encoder;
  WeightScaler scaler;
  std::optional<DurationBinning> binning;
  std::optional<TfidfCorpus> corpus;
  std::vector<std::size_t> train_index, val_index;  // trace indices in the source dataset
  std::vector<GraphInstance> train_graphs, val_graphs;
  Dims dims;
  bool has_durations = false;
};

struct PrepareOptions {
  double split_fraction = 0.8;
  BinningConfig binning;
  bool build_pseudo = true;  // only possible when the log has nonzero durations
};

PreparedData prepare_data(const Dataset& dataset, const PrepareOptions& options,
                          std::uint64_t seed);

/// Rebuilds graphs for an arbitrary dataset with already-fitted artifacts
/// (the evaluate path).
std::vector<GraphInstance> encode_graphs(const Dataset& dataset, const EncoderState& encoder,
                                         const WeightScaler& scaler,
                                         const std::optional<DurationBinning>& binning,
                                         const std::optional<TfidfCorpus>& corpus);

}  // namespace procgcn
