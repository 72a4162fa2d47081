#include <doctest.h>

#include <algorithm>

#include "procgcn/encode.hpp"
#include "procgcn/rng.hpp"

#include <nlohmann/json.hpp>

using namespace procgcn;

namespace {

EventRecord make_event(const std::string& activity, std::int64_t start, std::int64_t complete,
                       AttrMap attrs = {}) {
  EventRecord ev;
  ev.case_id = "c";
  ev.activity = activity;
  ev.start_ts = start;
  ev.complete_ts = complete;
  ev.attrs = std::move(attrs);
  return ev;
}

// schema: key activity, universal categorical "res", universal numeric "load",
// specific numeric "score" (when res=b), specific categorical "grade" (when
// res=b), one numeric + one categorical graph attribute
std::vector<AttributeSchema> full_schema() {
  return {
      {"activity", AttrLevel::node, AttrKind::categorical, AttrScope::key, {}},
      {"score", AttrLevel::node, AttrKind::numeric, AttrScope::specific,
       Applicability{"res", {"b"}}},
      {"grade", AttrLevel::node, AttrKind::categorical, AttrScope::specific,
       Applicability{"res", {"b"}}},
      {"res", AttrLevel::node, AttrKind::categorical, AttrScope::universal, {}},
      {"load", AttrLevel::node, AttrKind::numeric, AttrScope::universal, {}},
      {"cost", AttrLevel::graph, AttrKind::numeric, AttrScope::universal, {}},
      {"region", AttrLevel::graph, AttrKind::categorical, AttrScope::universal, {}},
  };
}

CaseTrace make_trace(std::vector<EventRecord> events, AttrMap graph_attrs, int label) {
  CaseTrace t;
  t.case_id = "c";
  t.events = std::move(events);
  t.graph_attrs = std::move(graph_attrs);
  t.label = label;
  return t;
}

}  // namespace

TEST_CASE("decompose_activity splits at the first whitespace and lowercases") {
  CHECK(decompose_activity("check insurance") == std::pair<std::string, std::string>{"check", "insurance"});
  CHECK(decompose_activity("register") == std::pair<std::string, std::string>{"register", ""});
  CHECK(decompose_activity("A_SUBMITTED loan app") ==
        std::pair<std::string, std::string>{"a_submitted", "loan app"});
  CHECK_THROWS_AS(decompose_activity(""), DataError);
}

TEST_CASE("event_duration") {
  CHECK(event_duration(make_event("a", 100, 160)) == 60);
  CHECK(event_duration(make_event("a", 100, 100)) == 0);
  EventRecord bad = make_event("a", 100, 90);
  CHECK_THROWS_AS(event_duration(bad), DataError);
}

TEST_CASE("median uses the lower middle for even counts") {
  CHECK(median_lower({1, 2, 100}) == 2);
  CHECK(median_lower({4, 1}) == 1);
  CHECK(median_lower({7}) == 7);

  // brute-force oracle: sorted middle (lower of two)
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> vals(static_cast<std::size_t>(rng.uniform_int(1, 30)));
    for (auto& v : vals) v = rng.uniform(-100.0, 100.0);
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    CHECK(median_lower(vals) == sorted[(sorted.size() - 1) / 2]);
  }
}

TEST_CASE("minmax scaling") {
  CHECK(minmax_scale(5, 0, 10) == doctest::Approx(0.5));
  CHECK(minmax_scale(0, 0, 10) == 0.0);
  CHECK(minmax_scale(20, 0, 10) == 1.0);   // clamped
  CHECK(minmax_scale(-3, 0, 10) == 0.0);   // clamped
  CHECK(minmax_scale(7, 7, 7) == 0.5);     // degenerate range
}

TEST_CASE("fit collects vocabularies, ranges, and medians from training only") {
  std::vector<CaseTrace> train = {
      make_trace({make_event("check claim", 0, 0, {{"res", "b"}, {"score", "1"}, {"grade", "g1"}, {"load", "0"}}),
                  make_event("check claim", 1, 1, {{"res", "b"}, {"score", "2"}, {"grade", "g2"}, {"load", "5"}}),
                  make_event("pay", 2, 2, {{"res", "a"}, {"score", ""}, {"grade", ""}, {"load", "10"}})},
                 {{"cost", "3"}, {"region", "x"}}, 0),
      make_trace({make_event("check claim", 0, 0, {{"res", "b"}, {"score", "100"}, {"grade", "g1"}, {"load", "2"}})},
                 {{"cost", "9"}, {"region", "y"}}, 1),
  };
  EncoderState st = EncoderState::fit(train, full_schema());

  // verb/description vocabularies in first-seen order
  CHECK(st.verb_vocab() == std::vector<std::string>{"check", "pay"});
  CHECK(st.desc_vocab() == std::vector<std::string>{"claim", ""});

  // layout: activity block first, then specific, then universal
  REQUIRE(st.layout().size() >= 5);
  CHECK(st.layout()[0].attr == "activity:verb");
  CHECK(st.layout()[1].attr == "activity:description");
  CHECK(st.layout()[2].attr == "score");
  CHECK(st.layout()[3].attr == "grade");
  CHECK(st.layout()[4].attr == "res");
  CHECK(st.activity_block_width() == 4);
  // zero durations across the log: no duration column
  CHECK_FALSE(st.has_duration_column());
}

TEST_CASE("encode_node covers one-hot, scaling, medians, and sentinels") {
  std::vector<CaseTrace> train = {
      make_trace({make_event("check claim", 0, 0, {{"res", "b"}, {"score", "1"}, {"grade", "g1"}, {"load", "0"}}),
                  make_event("check claim", 0, 0, {{"res", "b"}, {"score", "2"}, {"grade", "g2"}, {"load", "5"}}),
                  make_event("pay", 0, 0, {{"res", "a"}, {"score", ""}, {"grade", ""}, {"load", "10"}}),
                  make_event("check claim", 0, 0, {{"res", "b"}, {"score", "100"}, {"grade", "g1"}, {"load", "2"}})},
                 {{"cost", "3"}, {"region", "x"}}, 0),
      make_trace({make_event("pay", 0, 0, {{"res", "a"}, {"load", "4"}})},
                 {{"cost", "9"}, {"region", "y"}}, 1),
  };
  EncoderState st = EncoderState::fit(train, full_schema());
  // layout: verb(2) desc(2) score(1) grade(2) res(2) load(1) -> d_node = 10
  REQUIRE(st.node_dim() == 10);

  SUBCASE("applicable event") {
    EncodedNode n = st.encode_node(
        make_event("check claim", 0, 0, {{"res", "b"}, {"score", "2"}, {"grade", "g2"}, {"load", "5"}}));
    CHECK(n.vector[0] == 1.0);  // verb "check"
    CHECK(n.vector[1] == 0.0);
    CHECK(n.vector[2] == 1.0);  // desc "claim"
    CHECK(n.vector[4] == doctest::Approx((2.0 - 1.0) / 99.0));  // score scaled
    CHECK(n.vector[5] == 0.0);  // grade g1
    CHECK(n.vector[6] == 1.0);  // grade g2
    CHECK(n.vector[9] == doctest::Approx(0.5));  // load 5 in range (0,10)
    for (bool b : n.mask) CHECK(b);
  }

  SUBCASE("inapplicable specific categorical pads with -1 and masks") {
    EncodedNode n = st.encode_node(make_event("pay", 0, 0, {{"res", "a"}, {"load", "0"}}));
    CHECK(n.vector[5] == -1.0);
    CHECK(n.vector[6] == -1.0);
    CHECK_FALSE(n.mask[5]);
    CHECK_FALSE(n.mask[6]);
    // inapplicable specific numeric encodes the scaled training median, mask true
    CHECK(n.vector[4] == doctest::Approx((2.0 - 1.0) / 99.0));
    CHECK(n.mask[4]);
  }

  SUBCASE("unseen categories degrade to all-zero blocks") {
    EncodedNode n =
        st.encode_node(make_event("nope never", 0, 0, {{"res", "zz"}, {"load", "5"}}));
    CHECK(n.vector[0] == 0.0);
    CHECK(n.vector[1] == 0.0);
    CHECK(n.vector[2] == 0.0);
    CHECK(n.vector[3] == 0.0);
    CHECK(n.vector[7] == 0.0);  // res block all zero
    CHECK(n.vector[8] == 0.0);
    CHECK(n.mask[7]);
  }

  SUBCASE("mask invariant: masked positions are exactly the -1 entries") {
    Rng rng(5);
    for (const auto& t : train)
      for (const auto& ev : t.events) {
        EncodedNode n = st.encode_node(ev);
        for (std::size_t i = 0; i < n.vector.size(); ++i) {
          if (n.mask[i]) {
            CHECK(n.vector[i] >= 0.0);
            CHECK(n.vector[i] <= 1.0);
          } else {
            CHECK(n.vector[i] == -1.0);
          }
        }
      }
  }

  SUBCASE("graph attributes") {
    auto v = st.encode_graph_attrs(
        make_trace({}, {{"cost", "3"}, {"region", "x"}}, 0));
    REQUIRE(v.size() == 3);  // cost(1) + region(2)
    CHECK(v[0] == 0.0);      // min of range (3,9)
    CHECK(v[1] == 1.0);
    CHECK(v[2] == 0.0);
    auto clamped = st.encode_graph_attrs(make_trace({}, {{"cost", "20"}, {"region", "y"}}, 0));
    CHECK(clamped[0] == 1.0);
  }

  SUBCASE("activity ids use the joint vocabulary with an unseen slot") {
    CHECK(st.activity_id(make_event("check claim", 0, 0)) == 0);
    CHECK(st.activity_id(make_event("pay", 0, 0)) == 1);
    const int unseen = st.activity_id(make_event("brand new", 0, 0));
    CHECK(unseen == 2);
    CHECK(st.activity_vocab_size() == 3);  // 2 seen pairs + reserved slot
  }

  SUBCASE("encoding is deterministic and serializes through JSON") {
    nlohmann::json j = st.to_json();
    EncoderState back = EncoderState::from_json(j);
    for (const auto& t : train)
      for (const auto& ev : t.events) {
        EncodedNode a = st.encode_node(ev);
        EncodedNode b = back.encode_node(ev);
        CHECK(a.vector == b.vector);
        CHECK(a.mask == b.mask);
      }
    CHECK(back.node_dim() == st.node_dim());
    CHECK(back.graph_dim() == st.graph_dim());
  }
}

TEST_CASE("duration column appears only when training has nonzero durations") {
  std::vector<AttributeSchema> schema = {
      {"activity", AttrLevel::node, AttrKind::categorical, AttrScope::key, {}},
  };
  std::vector<CaseTrace> with_dur = {
      make_trace({make_event("a", 0, 30), make_event("b", 10, 10)}, {}, 0)};
  EncoderState st = EncoderState::fit(with_dur, schema);
  CHECK(st.has_duration_column());
  // duration 30 is the max of range (0,30) -> 1.0; duration 0 -> 0.0
  EncodedNode n30 = st.encode_node(make_event("a", 0, 30));
  EncodedNode n0 = st.encode_node(make_event("b", 10, 10));
  CHECK(n30.vector.back() == 1.0);
  CHECK(n0.vector.back() == 0.0);

  std::vector<CaseTrace> zero_dur = {make_trace({make_event("a", 0, 0)}, {}, 0)};
  CHECK_FALSE(EncoderState::fit(zero_dur, schema).has_duration_column());
}

TEST_CASE("fit rejects non-numeric training values for numeric attributes") {
  std::vector<AttributeSchema> schema = {
      {"activity", AttrLevel::node, AttrKind::categorical, AttrScope::key, {}},
      {"load", AttrLevel::node, AttrKind::numeric, AttrScope::universal, {}},
  };
  std::vector<CaseTrace> bad = {
      make_trace({make_event("a", 0, 0, {{"load", "not-a-number"}})}, {}, 0)};
  CHECK_THROWS_AS(EncoderState::fit(bad, schema), DataError);
}
