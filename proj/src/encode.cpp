#include "procgcn/encode.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

namespace procgcn {

namespace {

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

double parse_numeric(const std::string& attr, const std::string& text) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw DataError("attribute '" + attr + "': non-numeric value '" + text + "'");
  return v;
}

const std::string& attr_value(const AttrMap& attrs, const std::string& name) {
  static const std::string empty;
  auto it = attrs.find(name);
  return it == attrs.end() ? empty : it->second;
}

int vocab_index(const std::vector<std::string>& vocab, const std::string& value) {
  auto it = std::find(vocab.begin(), vocab.end(), value);
  return it == vocab.end() ? -1 : static_cast<int>(it - vocab.begin());
}

void push_if_new(std::vector<std::string>& vocab, const std::string& value) {
  if (vocab_index(vocab, value) < 0) vocab.push_back(value);
}

}  // namespace

std::pair<std::string, std::string> decompose_activity(const std::string& label) {
  if (label.empty()) throw DataError("empty activity label");
  std::size_t i = 0;
  while (i < label.size() && !std::isspace(static_cast<unsigned char>(label[i]))) ++i;
  std::string verb = label.substr(0, i);
  while (i < label.size() && std::isspace(static_cast<unsigned char>(label[i]))) ++i;
  return {lowercase(std::move(verb)), lowercase(label.substr(i))};
}

std::int64_t event_duration(const EventRecord& event) {
  if (event.complete_ts < event.start_ts)
    throw DataError("negative duration for activity '" + event.activity + "'");
  return event.complete_ts - event.start_ts;
}

double median_lower(std::vector<double> values) {
  if (values.empty()) throw DataError("median of empty set");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

double minmax_scale(double x, double min, double max) {
  if (max <= min) return 0.5;
  return std::clamp((x - min) / (max - min), 0.0, 1.0);
}

namespace {

bool is_applicable(const AttributeSchema& schema, const AttrMap& attrs) {
  if (schema.scope != AttrScope::specific) return true;
  return schema.applicability->matches(attr_value(attrs, schema.applicability->attr));
}

}  // namespace

EncoderState EncoderState::fit(std::span<const CaseTrace> train,
                               const std::vector<AttributeSchema>& schema) {
  if (train.empty()) throw DataError("cannot fit encoders on an empty training split");
  validate_schema(schema);

  EncoderState st;
  for (const auto& a : schema) {
    if (a.scope == AttrScope::key) continue;
    AttrEncoder enc;
    enc.schema = a;
    if (a.level == AttrLevel::graph)
      st.graph_attrs_.push_back(std::move(enc));
    else if (a.scope == AttrScope::specific)
      st.node_specific_.push_back(std::move(enc));
    else
      st.node_universal_.push_back(std::move(enc));
  }

  std::map<std::string, std::vector<double>> numeric_values;  // per attr, applicable only
  bool any_duration = false;
  bool dur_seen = false;

  auto observe = [&](AttrEncoder& enc, const AttrMap& attrs) {
    if (!is_applicable(enc.schema, attrs)) return;
    const std::string& raw = attr_value(attrs, enc.schema.name);
    if (enc.schema.kind == AttrKind::categorical) {
      push_if_new(enc.vocab, raw);
    } else {
      numeric_values[enc.schema.name].push_back(parse_numeric(enc.schema.name, raw));
    }
  };

  for (const auto& trace : train) {
    for (auto& enc : st.graph_attrs_) observe(enc, trace.graph_attrs);
    for (const auto& ev : trace.events) {
      auto [verb, desc] = decompose_activity(ev.activity);
      push_if_new(st.verb_vocab_, verb);
      push_if_new(st.desc_vocab_, desc);
      auto pair = std::make_pair(verb, desc);
      if (std::find(st.activity_vocab_.begin(), st.activity_vocab_.end(), pair) ==
          st.activity_vocab_.end())
        st.activity_vocab_.push_back(std::move(pair));

      for (auto& enc : st.node_specific_) observe(enc, ev.attrs);
      for (auto& enc : st.node_universal_) observe(enc, ev.attrs);

      std::int64_t dur = event_duration(ev);
      if (dur > 0) any_duration = true;
      if (!dur_seen) {
        st.dur_min_ = st.dur_max_ = static_cast<double>(dur);
        dur_seen = true;
      } else {
        st.dur_min_ = std::min(st.dur_min_, static_cast<double>(dur));
        st.dur_max_ = std::max(st.dur_max_, static_cast<double>(dur));
      }
    }
  }

  auto finish_numeric = [&](AttrEncoder& enc) {
    if (enc.schema.kind != AttrKind::numeric) return;
    auto& vals = numeric_values[enc.schema.name];
    if (vals.empty())
      throw DataError("attribute '" + enc.schema.name + "': no applicable training values");
    auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    enc.min = *mn;
    enc.max = *mx;
    if (enc.schema.scope == AttrScope::specific) enc.median = median_lower(vals);
  };
  for (auto& enc : st.node_specific_) finish_numeric(enc);
  for (auto& enc : st.node_universal_) finish_numeric(enc);
  for (auto& enc : st.graph_attrs_) finish_numeric(enc);

  // a duration column joins the universal block only when the log has any
  // nonzero duration
  st.has_duration_ = any_duration;
  st.rebuild_layout();
  return st;
}

void EncoderState::rebuild_layout() {
  layout_.clear();
  std::size_t off = 0;
  auto add = [&](const std::string& name, std::size_t width) {
    layout_.push_back({name, off, width});
    off += width;
  };
  add("activity:verb", verb_vocab_.size());
  add("activity:description", desc_vocab_.size());
  a_width_ = off;
  for (const auto& enc : node_specific_)
    add(enc.schema.name, enc.schema.kind == AttrKind::categorical ? enc.vocab.size() : 1);
  for (const auto& enc : node_universal_)
    add(enc.schema.name, enc.schema.kind == AttrKind::categorical ? enc.vocab.size() : 1);
  if (has_duration_) add("duration", 1);
  d_node_ = off;

  d_graph_ = 0;
  for (const auto& enc : graph_attrs_)
    d_graph_ += enc.schema.kind == AttrKind::categorical ? enc.vocab.size() : 1;
}

namespace {

void write_onehot(std::vector<double>& out, std::size_t offset, std::size_t width, int index) {
  for (std::size_t i = 0; i < width; ++i) out[offset + i] = 0.0;
  if (index >= 0 && static_cast<std::size_t>(index) < width)
    out[offset + static_cast<std::size_t>(index)] = 1.0;
  // unseen categories stay all-zero
}

}  // namespace

EncodedNode EncoderState::encode_node(const EventRecord& event) const {
  EncodedNode node;
  node.vector.assign(d_node_, 0.0);
  node.mask.assign(d_node_, true);

  auto [verb, desc] = decompose_activity(event.activity);
  write_onehot(node.vector, 0, verb_vocab_.size(), vocab_index(verb_vocab_, verb));
  write_onehot(node.vector, verb_vocab_.size(), desc_vocab_.size(),
               vocab_index(desc_vocab_, desc));

  std::size_t off = a_width_;
  auto encode_attr = [&](const AttrEncoder& enc) {
    const std::size_t width = enc.schema.kind == AttrKind::categorical ? enc.vocab.size() : 1;
    const bool applicable = is_applicable(enc.schema, event.attrs);
    if (enc.schema.kind == AttrKind::categorical) {
      if (applicable) {
        write_onehot(node.vector, off, width, vocab_index(enc.vocab, attr_value(event.attrs, enc.schema.name)));
      } else {
        for (std::size_t i = 0; i < width; ++i) {
          node.vector[off + i] = -1.0;  // padding sentinel, masked downstream
          node.mask[off + i] = false;
        }
      }
    } else {
      double raw = applicable
                       ? parse_numeric(enc.schema.name, attr_value(event.attrs, enc.schema.name))
                       : enc.median;
      node.vector[off] = minmax_scale(raw, enc.min, enc.max);
    }
    off += width;
  };
  for (const auto& enc : node_specific_) encode_attr(enc);
  for (const auto& enc : node_universal_) encode_attr(enc);

  if (has_duration_) {
    node.vector[off] =
        minmax_scale(static_cast<double>(event_duration(event)), dur_min_, dur_max_);
  }
  return node;
}

std::vector<double> EncoderState::encode_graph_attrs(const CaseTrace& trace) const {
  std::vector<double> out(d_graph_, 0.0);
  std::size_t off = 0;
  for (const auto& enc : graph_attrs_) {
    if (enc.schema.kind == AttrKind::categorical) {
      write_onehot(out, off, enc.vocab.size(),
                   vocab_index(enc.vocab, attr_value(trace.graph_attrs, enc.schema.name)));
      off += enc.vocab.size();
    } else {
      double raw = parse_numeric(enc.schema.name, attr_value(trace.graph_attrs, enc.schema.name));
      out[off++] = minmax_scale(raw, enc.min, enc.max);
    }
  }
  return out;
}

int EncoderState::activity_id(const EventRecord& event) const {
  auto pair = decompose_activity(event.activity);
  auto it = std::find(activity_vocab_.begin(), activity_vocab_.end(), pair);
  if (it == activity_vocab_.end()) return static_cast<int>(activity_vocab_.size());
  return static_cast<int>(it - activity_vocab_.begin());
}

// --- serialization ----------------------------------------------------------

namespace {

nlohmann::json attr_encoder_to_json(const EncoderState::AttrEncoder& enc) {
  nlohmann::json j;
  j["name"] = enc.schema.name;
  j["level"] = enc.schema.level == AttrLevel::node ? "node" : "graph";
  j["kind"] = enc.schema.kind == AttrKind::categorical ? "categorical" : "numeric";
  j["scope"] = enc.schema.scope == AttrScope::specific ? "specific" : "universal";
  if (enc.schema.applicability) {
    j["applies_when"] = {{"attr", enc.schema.applicability->attr},
                         {"values", enc.schema.applicability->values}};
  }
  if (enc.schema.kind == AttrKind::categorical) {
    j["vocab"] = enc.vocab;
  } else {
    j["min"] = enc.min;
    j["max"] = enc.max;
    if (enc.schema.scope == AttrScope::specific) j["median"] = enc.median;
  }
  return j;
}

EncoderState::AttrEncoder attr_encoder_from_json(const nlohmann::json& j, AttrLevel level) {
  EncoderState::AttrEncoder enc;
  enc.schema.name = j.at("name").get<std::string>();
  enc.schema.level = level;
  enc.schema.kind =
      j.at("kind").get<std::string>() == "categorical" ? AttrKind::categorical : AttrKind::numeric;
  enc.schema.scope =
      j.at("scope").get<std::string>() == "specific" ? AttrScope::specific : AttrScope::universal;
  if (j.contains("applies_when")) {
    Applicability app;
    app.attr = j["applies_when"].at("attr").get<std::string>();
    app.values = j["applies_when"].at("values").get<std::vector<std::string>>();
    enc.schema.applicability = std::move(app);
  }
  if (enc.schema.kind == AttrKind::categorical) {
    enc.vocab = j.at("vocab").get<std::vector<std::string>>();
  } else {
    enc.min = j.at("min").get<double>();
    enc.max = j.at("max").get<double>();
    if (j.contains("median")) enc.median = j["median"].get<double>();
  }
  return enc;
}

}  // namespace

nlohmann::json EncoderState::to_json() const {
  nlohmann::json j;
  j["verb_vocab"] = verb_vocab_;
  j["desc_vocab"] = desc_vocab_;
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& [v, d] : activity_vocab_) acts.push_back({v, d});
  j["activity_vocab"] = std::move(acts);
  auto dump = [](const std::vector<AttrEncoder>& encs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : encs) arr.push_back(attr_encoder_to_json(e));
    return arr;
  };
  j["node_specific"] = dump(node_specific_);
  j["node_universal"] = dump(node_universal_);
  j["graph_attrs"] = dump(graph_attrs_);
  j["has_duration"] = has_duration_;
  if (has_duration_) {
    j["duration_min"] = dur_min_;
    j["duration_max"] = dur_max_;
  }
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& e : layout_)
    layout.push_back({{"attr", e.attr}, {"offset", e.offset}, {"width", e.width}});
  j["layout"] = std::move(layout);
  return j;
}

EncoderState EncoderState::from_json(const nlohmann::json& j) {
  EncoderState st;
  st.verb_vocab_ = j.at("verb_vocab").get<std::vector<std::string>>();
  st.desc_vocab_ = j.at("desc_vocab").get<std::vector<std::string>>();
  for (const auto& p : j.at("activity_vocab"))
    st.activity_vocab_.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  for (const auto& e : j.at("node_specific"))
    st.node_specific_.push_back(attr_encoder_from_json(e, AttrLevel::node));
  for (const auto& e : j.at("node_universal"))
    st.node_universal_.push_back(attr_encoder_from_json(e, AttrLevel::node));
  for (const auto& e : j.at("graph_attrs"))
    st.graph_attrs_.push_back(attr_encoder_from_json(e, AttrLevel::graph));
  st.has_duration_ = j.at("has_duration").get<bool>();
  if (st.has_duration_) {
    st.dur_min_ = j.at("duration_min").get<double>();
    st.dur_max_ = j.at("duration_max").get<double>();
  }
  st.rebuild_layout();
  return st;
}

}  // namespace procgcn
