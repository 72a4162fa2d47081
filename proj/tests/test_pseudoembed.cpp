#include <doctest.h>

#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "procgcn/encode.hpp"
#include "procgcn/pseudoembed.hpp"
#include "procgcn/rng.hpp"

using namespace procgcn;

namespace {

BinningConfig raw_config(std::int64_t t_cut, int nq) {
  BinningConfig c;
  c.t_cut_s = t_cut;
  c.n_quantile = nq;
  c.round_unit_s = 1;
  c.max_iterations = 25;
  c.balance_tolerance = 0.25;
  return c;
}

CaseTrace doc(const std::vector<std::pair<std::string, std::int64_t>>& events) {
  CaseTrace t;
  t.case_id = "c";
  t.label = 0;
  std::int64_t ts = 0;
  for (const auto& [act, dur] : events) {
    EventRecord ev;
    ev.case_id = "c";
    ev.activity = act;
    ev.start_ts = ts;
    ev.complete_ts = ts + dur;
    t.events.push_back(std::move(ev));
    ts += 1000;
  }
  return t;
}

// independent brute-force tf-idf over (activity, bin) terms
std::vector<double> brute_force_matrix(const CaseTrace& trace,
                                       std::span<const CaseTrace> corpus_docs,
                                       const DurationBinning& binning) {
  const std::size_t n_bins = binning.n_bins();
  auto terms_of = [&](const CaseTrace& t) {
    std::map<std::pair<std::string, int>, double> tf;
    for (const auto& ev : t.events)
      tf[{ev.activity, assign_bin(event_duration(ev), binning)}] += 1.0;
    return tf;
  };

  std::map<std::pair<std::string, int>, double> df;
  for (const auto& d : corpus_docs)
    for (const auto& [term, _] : terms_of(d)) df[term] += 1.0;
  const double n_docs = static_cast<double>(corpus_docs.size());

  auto tf = terms_of(trace);
  std::vector<double> mat(trace.events.size() * n_bins, 0.0);
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    for (int b = 0; b < static_cast<int>(n_bins); ++b) {
      std::pair<std::string, int> term{trace.events[i].activity, b};
      auto it = tf.find(term);
      if (it == tf.end()) continue;
      const double d = df.count(term) ? df[term] : 0.0;
      const double idf = std::log((1.0 + n_docs) / (1.0 + d)) + 1.0;
      mat[i * n_bins + static_cast<std::size_t>(b)] = it->second * idf;
    }
  }
  return mat;
}

}  // namespace

TEST_CASE("binning splits short durations into unique bins and long ones by quantiles") {
  std::vector<std::int64_t> durations = {1, 2, 3, 100, 200, 300, 400};
  DurationBinning b = fit_binning(durations, raw_config(5, 2));

  CHECK(b.unique_bins == std::vector<std::int64_t>{1, 2, 3});
  REQUIRE(b.quantile_edges.size() == 1);
  CHECK(b.quantile_edges[0] == doctest::Approx(250.0));  // median of {100,200,300,400}
  CHECK(b.n_bins() == 5);

  SUBCASE("assignment: exact unique match") { CHECK(assign_bin(2, b) == 1); }
  SUBCASE("boundary goes to the right interval") {
    CHECK(assign_bin(100, b) == 3);
    CHECK(assign_bin(249, b) == 3);
    CHECK(assign_bin(250, b) == 4);
    CHECK(assign_bin(9999, b) == 4);
  }
  SUBCASE("unseen short duration snaps to the nearest unique bin") {
    CHECK(assign_bin(4, b) == 2);  // nearest to 3
    CHECK(assign_bin(0, b) == 0);  // nearest to 1
  }
  SUBCASE("assignment is total over nonnegative durations") {
    for (std::int64_t d = 0; d <= 500; ++d) {
      int bin = assign_bin(d, b);
      CHECK(bin >= 0);
      CHECK(bin < static_cast<int>(b.n_bins()));
    }
  }
}

TEST_CASE("binning edge cases") {
  SUBCASE("all durations below the cut-off") {
    DurationBinning b = fit_binning(std::vector<std::int64_t>{1, 2, 2, 4}, raw_config(10, 4));
    CHECK(b.unique_bins == std::vector<std::int64_t>{1, 2, 4});
    CHECK(b.quantile_bin_count() == 0);
    CHECK(b.n_bins() == 3);
    // durations >= t_cut still land somewhere (nearest unique)
    CHECK(assign_bin(1000, b) == 2);
  }
  SUBCASE("all durations equal and above the cut-off collapse to one bin") {
    DurationBinning b =
        fit_binning(std::vector<std::int64_t>{500, 500, 500}, raw_config(5, 8));
    CHECK(b.unique_bins.empty());
    CHECK(b.quantile_bin_count() == 1);
    CHECK(b.n_bins() == 1);
    CHECK(assign_bin(500, b) == 0);
    CHECK(assign_bin(1, b) == 0);  // no unique bins: falls into the interval
  }
  SUBCASE("empty input rejected") {
    CHECK_THROWS_AS(fit_binning(std::vector<std::int64_t>{}, raw_config(5, 2)), DataError);
  }
  SUBCASE("rounding to the minute buckets nearby durations together") {
    BinningConfig c = raw_config(300, 1);
    c.round_unit_s = 60;
    DurationBinning b = fit_binning(std::vector<std::int64_t>{29, 31, 89, 400, 800}, c);
    // 29 -> 0, 31 -> 60, 89 -> 60: two unique bins below the five-minute cut
    CHECK(b.unique_bins == std::vector<std::int64_t>{0, 60});
    CHECK(assign_bin(29, b) == assign_bin(15, b));
    CHECK(assign_bin(31, b) == assign_bin(89, b));
  }
}

TEST_CASE("balance search keeps the most balanced configuration seen") {
  // a 10/30 split at the initial quantile edge starts at ratio 3 and forces
  // the search to explore neighbors
  std::vector<std::int64_t> durations = {1};
  for (int i = 0; i < 10; ++i) durations.push_back(100);
  for (int i = 0; i < 30; ++i) durations.push_back(200);
  BinningConfig c = raw_config(50, 2);
  c.max_iterations = 30;
  DurationBinning b = fit_binning(durations, c);
  CHECK(b.iterations > 1);  // the initial configuration is unbalanced
  CHECK(b.iterations <= 30);
  CHECK(b.balance_ratio <= 1.0 + c.balance_tolerance);

  SUBCASE("a looser tolerance never needs more iterations") {
    double prev_iterations = 1e18;
    for (double tol : {0.05, 0.1, 0.25, 0.5, 1.0}) {
      BinningConfig cc = c;
      cc.balance_tolerance = tol;
      DurationBinning bb = fit_binning(durations, cc);
      CHECK(static_cast<double>(bb.iterations) <= prev_iterations);
      prev_iterations = static_cast<double>(bb.iterations);
    }
  }
  SUBCASE("the iteration cap is honored") {
    BinningConfig cc = c;
    cc.max_iterations = 2;
    DurationBinning bb = fit_binning(durations, cc);
    CHECK(bb.iterations <= 2);
  }
}

TEST_CASE("tf-idf hand values") {
  // corpus of 3 docs; term ("a", bin of 7) appears in 1 doc, twice
  std::vector<CaseTrace> docs = {
      doc({{"a", 7}, {"a", 7}}),
      doc({{"b", 7}}),
      doc({{"b", 9}}),
  };
  DurationBinning b = fit_binning(std::vector<std::int64_t>{7, 7, 7, 9}, raw_config(100, 2));
  TfidfCorpus corpus = fit_corpus(docs, b);

  auto mat = pseudo_matrix(docs[0], b, corpus);
  const std::size_t n_bins = b.n_bins();
  const int bin7 = assign_bin(7, b);
  // tf = 2, idf = ln(4/2) + 1
  CHECK(mat[0 * n_bins + static_cast<std::size_t>(bin7)] ==
        doctest::Approx(2.0 * (std::log(2.0) + 1.0)).epsilon(1e-12));

  SUBCASE("term present once in every doc has entry 1") {
    std::vector<CaseTrace> uniform = {doc({{"x", 7}}), doc({{"x", 7}}), doc({{"x", 7}})};
    TfidfCorpus c2 = fit_corpus(uniform, b);
    auto m = pseudo_matrix(uniform[0], b, c2);
    CHECK(m[static_cast<std::size_t>(bin7)] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("held-out doc with a term unseen in training") {
    CaseTrace held = doc({{"zz", 7}});
    auto m = pseudo_matrix(held, b, corpus);
    // df = 0 -> idf = ln((1+3)/1) + 1, tf = 1 from its own doc
    CHECK(m[static_cast<std::size_t>(bin7)] ==
          doctest::Approx(std::log(4.0) + 1.0).epsilon(1e-12));
  }
}

TEST_CASE("tf-idf matches the brute-force oracle entry for entry") {
  Rng rng(99);
  const std::vector<std::string> acts = {"a", "b", "c", "d"};
  for (int round = 0; round < 20; ++round) {
    std::vector<CaseTrace> docs;
    const int n_docs = static_cast<int>(rng.uniform_int(2, 10));
    std::vector<std::int64_t> durations;
    for (int i = 0; i < n_docs; ++i) {
      std::vector<std::pair<std::string, std::int64_t>> evs;
      const int len = static_cast<int>(rng.uniform_int(1, 7));
      for (int k = 0; k < len; ++k) {
        std::int64_t dur = rng.flip() ? rng.uniform_int(0, 9) : rng.uniform_int(50, 400);
        evs.emplace_back(rng.pick(acts), dur);
        durations.push_back(dur);
      }
      docs.push_back(doc(evs));
    }
    DurationBinning b =
        fit_binning(durations, raw_config(10, static_cast<int>(rng.uniform_int(1, 5))));
    TfidfCorpus corpus = fit_corpus(docs, b);
    for (const auto& d : docs) {
      auto got = pseudo_matrix(d, b, corpus);
      auto want = brute_force_matrix(d, docs, b);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("binning and corpus serialize through JSON") {
  std::vector<std::int64_t> durations = {1, 2, 3, 100, 200, 300, 400};
  DurationBinning b = fit_binning(durations, raw_config(5, 2));
  DurationBinning back = DurationBinning::from_json(b.to_json());
  CHECK(back.unique_bins == b.unique_bins);
  CHECK(back.quantile_edges == b.quantile_edges);
  CHECK(back.n_bins() == b.n_bins());
  for (std::int64_t d = 0; d < 500; d += 13) CHECK(assign_bin(d, back) == assign_bin(d, b));

  std::vector<CaseTrace> docs = {doc({{"a", 1}}), doc({{"b", 300}})};
  TfidfCorpus corpus = fit_corpus(docs, b);
  TfidfCorpus cback = TfidfCorpus::from_json(corpus.to_json());
  CHECK(cback.n_docs == corpus.n_docs);
  CHECK(cback.df == corpus.df);
}
