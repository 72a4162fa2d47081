#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "procgcn/error.hpp"

namespace procgcn {

enum class AttrLevel { node, graph };
enum class AttrKind { categorical, numeric };
enum class AttrScope { key, universal, specific };

/// Condition gating a specific attribute: it is relevant only when the named
/// universal attribute takes one of the listed values.
struct Applicability {
  std::string attr;
  std::vector<std::string> values;

  bool matches(const std::string& value) const;
};

struct AttributeSchema {
  std::string name;
  AttrLevel level = AttrLevel::node;
  AttrKind kind = AttrKind::categorical;
  AttrScope scope = AttrScope::universal;
  std::optional<Applicability> applicability;  // required iff scope == specific
};

/// Raw attribute values are kept as strings until encoding.
using AttrMap = std::map<std::string, std::string>;

struct EventRecord {
  std::string case_id;
  std::string activity;
  std::int64_t start_ts = 0;     // seconds since epoch
  std::int64_t complete_ts = 0;  // seconds since epoch
  AttrMap attrs;
};

struct CaseTrace {
  std::string case_id;
  std::vector<EventRecord> events;  // sorted ascending by start_ts
  AttrMap graph_attrs;
  int label = -1;
};

struct Dataset {
  std::vector<AttributeSchema> schema;
  std::vector<CaseTrace> traces;
  std::vector<std::string> class_names;
  std::vector<std::string> warnings;  // non-fatal issues found while loading

  std::vector<std::size_t> class_counts() const;
};

/// Checks schema invariants: exactly one node-level key attribute, key
/// disjoint from universal/specific, every specific attribute carries an
/// applicability condition, graph-level attributes are universal.
void validate_schema(const std::vector<AttributeSchema>& schema);

/// Parses an ISO-8601 timestamp ("YYYY-MM-DD[T ]HH:MM:SS", optional trailing
/// 'Z') or a raw integer count of seconds.
std::int64_t parse_timestamp(const std::string& text);

Dataset load_csv(const std::string& path, std::vector<AttributeSchema> schema,
                 const std::string& label_column);

void write_csv(const Dataset& dataset, const std::string& path,
               const std::string& label_column);

/// Balanced synthetic log: `n_classes` outcomes with `n_per_class` traces
/// each, the outcome fixed by the final activity. Zero event durations, two
/// universal categorical node attributes, one numeric graph attribute.
Dataset synth_balanced(int n_per_class, int n_classes, std::uint64_t seed);

/// Imbalanced synthetic log: class counts follow `ratios` (largest-remainder
/// rounding). All traces share the final activity; the outcome is a function
/// of node- and graph-level attribute patterns. Nonzero durations, three
/// universal numeric node attributes, one specific categorical node attribute
/// gated on a universal one, three numeric + one categorical graph attributes.
Dataset synth_imbalanced(int total, const std::vector<double>& ratios, std::uint64_t seed);

}  // namespace procgcn
