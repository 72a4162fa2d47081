#include "procgcn/eventlog.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "procgcn/rng.hpp"

namespace procgcn {

bool Applicability::matches(const std::string& value) const {
  return std::find(values.begin(), values.end(), value) != values.end();
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const auto& t : traces) {
    if (t.label < 0 || static_cast<std::size_t>(t.label) >= counts.size())
      throw DataError("trace label out of range for case " + t.case_id);
    ++counts[static_cast<std::size_t>(t.label)];
  }
  return counts;
}

void validate_schema(const std::vector<AttributeSchema>& schema) {
  int keys = 0;
  std::set<std::string> names;
  for (const auto& a : schema) {
    if (!names.insert(a.name).second)
      throw SchemaError("duplicate attribute name: " + a.name);
    if (a.scope == AttrScope::key) {
      if (a.level != AttrLevel::node)
        throw SchemaError("key attribute must be node-level: " + a.name);
      ++keys;
    }
    if (a.scope == AttrScope::specific) {
      if (!a.applicability)
        throw SchemaError("specific attribute lacks an applicability condition: " + a.name);
      if (a.level == AttrLevel::graph)
        throw SchemaError("graph-level attributes cannot be specific: " + a.name);
    }
  }
  if (keys != 1) throw SchemaError("schema must declare exactly one key attribute");
}

namespace {

// --- timestamp parsing ------------------------------------------------------

// Days from civil date, epoch 1970-01-01 (Howard Hinnant's algorithm).
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool parse_int(std::string_view s, std::int64_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

std::int64_t parse_timestamp(const std::string& text) {
  std::string s = text;
  // trim
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
  if (s.empty()) throw DataError("empty timestamp");

  std::int64_t raw = 0;
  if (parse_int(s, raw)) return raw;

  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.pop_back();
  int y, mo, d, h, mi, sec;
  char sep;
  if (std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &sec) == 7 &&
      (sep == 'T' || sep == ' ') && mo >= 1 && mo <= 12 && d >= 1 && d <= 31 && h >= 0 &&
      h < 24 && mi >= 0 && mi < 60 && sec >= 0 && sec < 61) {
    return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
           h * 3600 + mi * 60 + sec;
  }
  throw DataError("unparsable timestamp: '" + text + "'");
}

namespace {

// --- minimal CSV ------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string format_number(double v) {
  // shortest representation that round-trips
  std::array<char, 32> buf;
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), p);
}

}  // namespace

Dataset load_csv(const std::string& path, std::vector<AttributeSchema> schema,
                 const std::string& label_column) {
  validate_schema(schema);
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);

  std::string header_line;
  if (!std::getline(in, header_line)) throw DataError("empty file: " + path);
  auto header = split_csv_line(header_line);

  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

  auto require = [&](const std::string& name) -> std::size_t {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("missing column: " + name);
    return it->second;
  };

  const std::size_t c_case = require("case_id");
  const std::size_t c_act = require("activity");
  const std::size_t c_start = require("start_ts");
  const std::size_t c_complete = require("complete_ts");
  const std::size_t c_label = require(label_column);
  // the key attribute is the activity column itself; other attributes each
  // need their own column
  std::vector<std::pair<const AttributeSchema*, std::size_t>> attr_cols;
  for (const auto& a : schema) {
    if (a.scope == AttrScope::key) continue;
    attr_cols.emplace_back(&a, require(a.name));
  }

  Dataset ds;
  ds.schema = std::move(schema);

  struct PendingEvent {
    EventRecord ev;
    std::size_t row;  // original file order, tie-break for equal start_ts
  };
  std::vector<std::string> case_order;
  std::map<std::string, std::vector<PendingEvent>> by_case;
  std::map<std::string, AttrMap> graph_attrs;
  std::map<std::string, std::string> case_label;
  std::map<std::string, int> label_index;

  std::string line;
  std::size_t line_no = 1;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));

    EventRecord ev;
    ev.case_id = fields[c_case];
    ev.activity = fields[c_act];
    if (ev.activity.empty())
      throw DataError("line " + std::to_string(line_no) + ": empty activity");
    try {
      ev.start_ts = parse_timestamp(fields[c_start]);
      ev.complete_ts = parse_timestamp(fields[c_complete]);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (ev.complete_ts < ev.start_ts)
      throw DataError("line " + std::to_string(line_no) + ": complete_ts before start_ts");

    AttrMap node_attrs, g_attrs;
    for (const auto& [attr, idx] : attr_cols) {
      if (attr->level == AttrLevel::node)
        node_attrs[attr->name] = fields[idx];
      else
        g_attrs[attr->name] = fields[idx];
    }
    ev.attrs = std::move(node_attrs);

    auto it = by_case.find(ev.case_id);
    if (it == by_case.end()) {
      case_order.push_back(ev.case_id);
      graph_attrs[ev.case_id] = g_attrs;  // first row wins
      case_label[ev.case_id] = fields[c_label];
    } else {
      if (graph_attrs[ev.case_id] != g_attrs)
        ds.warnings.push_back("case " + ev.case_id +
                              ": graph-level attributes differ across rows; first row kept");
    }
    by_case[ev.case_id].push_back({std::move(ev), row_no++});
  }

  for (const auto& cid : case_order) {
    auto& pending = by_case[cid];
    if (pending.empty()) throw DataError("case with zero events: " + cid);
    std::sort(pending.begin(), pending.end(), [](const PendingEvent& a, const PendingEvent& b) {
      if (a.ev.start_ts != b.ev.start_ts) return a.ev.start_ts < b.ev.start_ts;
      return a.row < b.row;
    });
    CaseTrace trace;
    trace.case_id = cid;
    for (auto& p : pending) trace.events.push_back(std::move(p.ev));
    trace.graph_attrs = graph_attrs[cid];
    const std::string& ltext = case_label[cid];
    auto [it, inserted] = label_index.try_emplace(ltext, static_cast<int>(ds.class_names.size()));
    if (inserted) ds.class_names.push_back(ltext);
    trace.label = it->second;
    ds.traces.push_back(std::move(trace));
  }
  if (ds.class_names.size() < 2)
    throw DataError("dataset has fewer than 2 outcome classes");
  return ds;
}

void write_csv(const Dataset& dataset, const std::string& path,
               const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);

  std::vector<const AttributeSchema*> node_attrs, graph_attrs;
  for (const auto& a : dataset.schema) {
    if (a.scope == AttrScope::key) continue;
    (a.level == AttrLevel::node ? node_attrs : graph_attrs).push_back(&a);
  }

  out << "case_id,activity,start_ts,complete_ts," << csv_escape(label_column);
  for (const auto* a : node_attrs) out << ',' << csv_escape(a->name);
  for (const auto* a : graph_attrs) out << ',' << csv_escape(a->name);
  out << '\n';

  auto lookup = [](const AttrMap& m, const std::string& k) -> std::string {
    auto it = m.find(k);
    return it == m.end() ? std::string() : it->second;
  };

  for (const auto& t : dataset.traces) {
    const std::string& label = dataset.class_names.at(static_cast<std::size_t>(t.label));
    for (const auto& ev : t.events) {
      out << csv_escape(t.case_id) << ',' << csv_escape(ev.activity) << ',' << ev.start_ts
          << ',' << ev.complete_ts << ',' << csv_escape(label);
      for (const auto* a : node_attrs) out << ',' << csv_escape(lookup(ev.attrs, a->name));
      for (const auto* a : graph_attrs) out << ',' << csv_escape(lookup(t.graph_attrs, a->name));
      out << '\n';
    }
  }
}

// --- synthetic logs ---------------------------------------------------------

namespace {

const std::vector<std::string> kVerbs = {"register", "check", "review", "update", "submit"};
const std::vector<std::string> kObjects = {"application", "document", "payment", "claim"};

std::vector<int> largest_remainder_counts(int total, const std::vector<double>& ratios) {
  double sum = std::accumulate(ratios.begin(), ratios.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("class ratios must sum to 1, got " + format_number(sum));
  for (double r : ratios)
    if (r <= 0.0) throw ConfigError("every class ratio must be positive");

  std::vector<int> counts(ratios.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    double exact = total * ratios[i];
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - counts[i], i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int k = 0; k < total - assigned; ++k) ++counts[remainders[static_cast<std::size_t>(k)].second];
  for (int c : counts)
    if (c == 0) throw ConfigError("total too small to realize every class");
  return counts;
}

}  // namespace

Dataset synth_balanced(int n_per_class, int n_classes, std::uint64_t seed) {
  if (n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");

  Dataset ds;
  ds.schema = {
      {"activity", AttrLevel::node, AttrKind::categorical, AttrScope::key, {}},
      {"resource", AttrLevel::node, AttrKind::categorical, AttrScope::universal, {}},
      {"channel", AttrLevel::node, AttrKind::categorical, AttrScope::universal, {}},
      {"priority", AttrLevel::graph, AttrKind::numeric, AttrScope::universal, {}},
  };
  for (int c = 0; c < n_classes; ++c) ds.class_names.push_back("outcome" + std::to_string(c));

  const std::vector<std::string> resources = {"r0", "r1", "r2", "r3"};
  const std::vector<std::string> channels = {"web", "phone", "mail"};

  Rng rng(seed, "synth_balanced");
  int serial = 0;
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      CaseTrace t;
      t.case_id = "c" + std::to_string(serial++);
      t.label = c;
      t.graph_attrs["priority"] = format_number(rng.uniform(0.0, 10.0));
      int len = static_cast<int>(rng.uniform_int(4, 8));
      std::int64_t ts = 1'600'000'000 + rng.uniform_int(0, 86'400);
      for (int k = 0; k < len; ++k) {
        EventRecord ev;
        ev.case_id = t.case_id;
        ev.activity = (k == len - 1)
                          ? "decide outcome" + std::to_string(c)
                          : rng.pick(kVerbs) + " " + rng.pick(kObjects);
        ev.start_ts = ts;
        ev.complete_ts = ts;  // zero durations
        ev.attrs["resource"] = rng.pick(resources);
        ev.attrs["channel"] = rng.pick(channels);
        t.events.push_back(std::move(ev));
        // occasional zero gap keeps simultaneous events in the distribution
        ts += rng.flip(0.15) ? 0 : rng.uniform_int(60, 3'600);
      }
      ds.traces.push_back(std::move(t));
    }
  }
  return ds;
}

Dataset synth_imbalanced(int total, const std::vector<double>& ratios, std::uint64_t seed) {
  if (ratios.size() < 2) throw ConfigError("need at least 2 class ratios");
  auto counts = largest_remainder_counts(total, ratios);
  const int n_classes = static_cast<int>(ratios.size());

  Dataset ds;
  ds.schema = {
      {"activity", AttrLevel::node, AttrKind::categorical, AttrScope::key, {}},
      {"unit", AttrLevel::node, AttrKind::categorical, AttrScope::universal, {}},
      {"severity", AttrLevel::node, AttrKind::numeric, AttrScope::universal, {}},
      {"load", AttrLevel::node, AttrKind::numeric, AttrScope::universal, {}},
      {"cost_rate", AttrLevel::node, AttrKind::numeric, AttrScope::universal, {}},
      {"lab_result", AttrLevel::node, AttrKind::categorical, AttrScope::specific,
       Applicability{"unit", {"lab"}}},
      {"acuity", AttrLevel::graph, AttrKind::numeric, AttrScope::universal, {}},
      {"age", AttrLevel::graph, AttrKind::numeric, AttrScope::universal, {}},
      {"comorbidity", AttrLevel::graph, AttrKind::numeric, AttrScope::universal, {}},
      {"admission", AttrLevel::graph, AttrKind::categorical, AttrScope::universal, {}},
  };
  for (int c = 0; c < n_classes; ++c) ds.class_names.push_back("outcome" + std::to_string(c));

  const std::vector<std::string> units = {"intake", "lab", "surgery", "billing"};
  const std::vector<std::string> lab_values = {"pos", "neg", "inconclusive"};
  const std::vector<std::string> admissions = {"emergency", "referral", "routine"};

  Rng rng(seed, "synth_imbalanced");
  int serial = 0;
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < counts[static_cast<std::size_t>(c)]; ++i) {
      CaseTrace t;
      t.case_id = "p" + std::to_string(serial++);
      t.label = c;
      // graph-level pattern: acuity lands in a class-specific band, the other
      // attributes add class-correlated but overlapping context
      t.graph_attrs["acuity"] = format_number(1.5 * c + rng.uniform(0.0, 1.2));
      t.graph_attrs["age"] = format_number(20.0 + 8.0 * c + rng.uniform(0.0, 30.0));
      t.graph_attrs["comorbidity"] = format_number(rng.uniform(0.0, 1.0) + 0.2 * c);
      t.graph_attrs["admission"] = admissions[static_cast<std::size_t>(
          rng.uniform_int(0, 2) == 0 ? c % 3 : rng.uniform_int(0, 2))];

      int len = static_cast<int>(rng.uniform_int(4, 8));
      std::int64_t ts = 1'650'000'000 + rng.uniform_int(0, 86'400);
      for (int k = 0; k < len; ++k) {
        EventRecord ev;
        ev.case_id = t.case_id;
        if (k == len - 1) {
          ev.activity = "discharge patient";  // shared across classes
        } else {
          ev.activity = rng.pick(kVerbs) + " " + rng.pick(kObjects);
        }
        const std::string& unit = rng.pick(units);
        ev.attrs["unit"] = unit;
        // node-level pattern: severity shifts with the class
        ev.attrs["severity"] = format_number(0.4 * c + rng.uniform(0.0, 1.0));
        ev.attrs["load"] = format_number(rng.uniform(0.0, 5.0));
        ev.attrs["cost_rate"] = format_number(rng.uniform(10.0, 200.0) + 5.0 * c);
        if (unit == "lab") {
          std::size_t bias = static_cast<std::size_t>(c) % lab_values.size();
          ev.attrs["lab_result"] = rng.flip(0.6) ? lab_values[bias] : rng.pick(lab_values);
        } else {
          ev.attrs["lab_result"] = "NR";  // irrelevant placeholder
        }
        ev.start_ts = ts;
        std::int64_t duration = rng.flip(0.45) ? rng.uniform_int(30, 290)
                                               : rng.uniform_int(300, 14'400);
        ev.complete_ts = ts + duration;
        t.events.push_back(std::move(ev));
        ts += rng.flip(0.1) ? 0 : rng.uniform_int(120, 7'200);
      }
      ds.traces.push_back(std::move(t));
    }
  }
  return ds;
}

}  // namespace procgcn
