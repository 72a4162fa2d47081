#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "procgcn/eventlog.hpp"

namespace procgcn {

/// Splits an activity label into a lowercased (verb, description) pair at the
/// first whitespace run. "register" -> ("register", "").
std::pair<std::string, std::string> decompose_activity(const std::string& label);

/// Event duration in seconds (complete - start). Negative differences are a
/// data error.
std::int64_t event_duration(const EventRecord& event);

struct EncodedNode {
  std::vector<double> vector;
  std::vector<bool> mask;  // false exactly on -1 padded positions
};

/// Encoders fitted on the training split only. Categorical attributes carry a
/// first-seen vocabulary, numeric ones a (min, max) range, specific numeric
/// ones additionally the median of applicable training values.
class EncoderState {
 public:
  struct AttrEncoder {
    AttributeSchema schema;
    std::vector<std::string> vocab;  // categorical
    double min = 0.0, max = 0.0;     // numeric
    double median = 0.0;             // specific numeric only (raw units)
  };
  struct LayoutEntry {
    std::string attr;
    std::size_t offset = 0;
    std::size_t width = 0;
  };

  static EncoderState fit(std::span<const CaseTrace> train,
                          const std::vector<AttributeSchema>& schema);

  EncodedNode encode_node(const EventRecord& event) const;
  std::vector<double> encode_graph_attrs(const CaseTrace& trace) const;

  /// Index of an event's (verb, description) pair in the joint activity
  /// vocabulary; unseen pairs map to the reserved trailing slot.
  int activity_id(const EventRecord& event) const;

  std::size_t node_dim() const { return d_node_; }
  std::size_t graph_dim() const { return d_graph_; }
  /// Width of the leading activity block (verb + description one-hots).
  std::size_t activity_block_width() const { return a_width_; }
  /// Joint vocabulary size including the unseen-pair slot.
  std::size_t activity_vocab_size() const { return activity_vocab_.size() + 1; }
  bool has_duration_column() const { return has_duration_; }
  const std::vector<LayoutEntry>& layout() const { return layout_; }
  const std::vector<std::string>& verb_vocab() const { return verb_vocab_; }
  const std::vector<std::string>& desc_vocab() const { return desc_vocab_; }

  nlohmann::json to_json() const;
  static EncoderState from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> verb_vocab_, desc_vocab_;
  std::vector<std::pair<std::string, std::string>> activity_vocab_;
  std::vector<AttrEncoder> node_specific_, node_universal_, graph_attrs_;
  bool has_duration_ = false;
  double dur_min_ = 0.0, dur_max_ = 0.0;
  std::vector<LayoutEntry> layout_;
  std::size_t d_node_ = 0, d_graph_ = 0, a_width_ = 0;

  void rebuild_layout();
};

/// Lower middle of the sorted values for even counts.
double median_lower(std::vector<double> values);

/// (x - min) / (max - min) clamped to [0, 1]; 0.5 when the range is degenerate.
double minmax_scale(double x, double min, double max);

}  // namespace procgcn
