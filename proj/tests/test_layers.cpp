#include <doctest.h>

#include <cmath>

#include "procgcn/layers.hpp"
#include "test_helpers.hpp"

using namespace procgcn;

namespace {

GcnConvLayer gcn_layer(std::size_t d_in, std::size_t d_out, std::vector<double> w,
                       std::vector<double> b) {
  GcnConvLayer l;
  l.weight = Param::matrix("w", d_in, d_out);
  l.weight.value = std::move(w);
  l.bias = Param::matrix("b", 1, d_out, ParamKind::bias);
  l.bias.value = std::move(b);
  return l;
}

GraphConvLayer graph_layer(std::size_t d_in, std::size_t d_out, std::vector<double> ws,
                           std::vector<double> wn, std::vector<double> b, Aggr aggr) {
  GraphConvLayer l;
  l.weight_self = Param::matrix("ws", d_in, d_out);
  l.weight_self.value = std::move(ws);
  l.weight_neigh = Param::matrix("wn", d_in, d_out);
  l.weight_neigh.value = std::move(wn);
  l.bias = Param::matrix("b", 1, d_out, ParamKind::bias);
  l.bias.value = std::move(b);
  l.aggr = aggr;
  return l;
}

}  // namespace

TEST_CASE("renormalized conv hand values") {
  ad::Tape t;
  SUBCASE("single node is an identity with unit weight") {
    auto layer = gcn_layer(1, 1, {1.0}, {0.0});
    auto x = t.leaf(1, 1, std::vector<double>{2.0}, false);
    auto out = gcn_conv(t, x, {}, {}, {}, layer);
    CHECK(out.value()[0] == doctest::Approx(2.0));
  }
  SUBCASE("two-node chain with full weight") {
    auto layer = gcn_layer(1, 1, {1.0}, {0.0});
    auto x = t.leaf(2, 1, std::vector<double>{1.0, 2.0}, false);
    std::vector<int> src = {0}, dst = {1};
    std::vector<double> w = {1.0};
    auto out = gcn_conv(t, x, src, dst, w, layer);
    CHECK(out.value()[0] == doctest::Approx(1.0));
    // deg(0)=1, deg(1)=2: 0.5*2 + 1/sqrt(2)*1
    CHECK(out.value()[1] == doctest::Approx(0.5 * 2.0 + 1.0 / std::sqrt(2.0)));
  }
  SUBCASE("zero weight removes the neighbor term and its degree contribution") {
    auto layer = gcn_layer(1, 1, {1.0}, {0.0});
    auto x = t.leaf(2, 1, std::vector<double>{1.0, 2.0}, false);
    std::vector<int> src = {0}, dst = {1};
    std::vector<double> w = {0.0};
    auto out = gcn_conv(t, x, src, dst, w, layer);
    CHECK(out.value()[1] == doctest::Approx(2.0));
  }
  SUBCASE("edge weights outside [0,1] are rejected") {
    auto layer = gcn_layer(1, 1, {1.0}, {0.0});
    auto x = t.leaf(2, 1, std::vector<double>{1.0, 2.0}, false);
    std::vector<int> src = {0}, dst = {1};
    std::vector<double> w = {1.5};
    CHECK_THROWS_AS(gcn_conv(t, x, src, dst, w, layer), Error);
  }
}

TEST_CASE("degree-scaled conv hand values") {
  ad::Tape t;
  SUBCASE("two-node chain, add aggregation") {
    auto layer = graph_layer(1, 1, {1.0}, {1.0}, {0.0}, Aggr::add);
    auto x = t.leaf(2, 1, std::vector<double>{1.0, 2.0}, false);
    std::vector<int> src = {0}, dst = {1};
    std::vector<double> w = {0.5};
    auto out = graph_conv(t, x, src, dst, w, layer);
    CHECK(out.value()[0] == doctest::Approx(1.0));
    CHECK(out.value()[1] == doctest::Approx(2.5));
  }
  SUBCASE("no edges reduces to the self transform") {
    auto layer = graph_layer(1, 1, {3.0}, {7.0}, {0.25}, Aggr::add);
    auto x = t.leaf(2, 1, std::vector<double>{1.0, 2.0}, false);
    auto out = graph_conv(t, x, {}, {}, {}, layer);
    CHECK(out.value()[0] == doctest::Approx(3.25));
    CHECK(out.value()[1] == doctest::Approx(6.25));
  }
  SUBCASE("mean of a single incoming message equals add") {
    auto add_layer = graph_layer(1, 1, {1.0}, {1.0}, {0.0}, Aggr::add);
    auto mean_layer = graph_layer(1, 1, {1.0}, {1.0}, {0.0}, Aggr::mean);
    auto x = t.leaf(2, 1, std::vector<double>{1.0, 2.0}, false);
    std::vector<int> src = {0}, dst = {1};
    std::vector<double> w = {0.5};
    auto a = graph_conv(t, x, src, dst, w, add_layer);
    auto m = graph_conv(t, x, src, dst, w, mean_layer);
    CHECK(a.value()[1] == doctest::Approx(m.value()[1]));
  }
}

TEST_CASE("conv layers match dense oracles on random chains") {
  Rng rng(31337);
  for (int round = 0; round < 60; ++round) {
    const std::size_t d_in = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const std::size_t d_out = static_cast<std::size_t>(rng.uniform_int(1, 4));
    auto g = testutil::random_chain(rng, 6, d_in);
    std::vector<double> weight(d_in * d_out), bias(d_out);
    for (auto& v : weight) v = rng.uniform(-1.5, 1.5);
    for (auto& v : bias) v = rng.uniform(-0.5, 0.5);

    {
      // fresh tape per layer: bound params must outlive a tape generation
      ad::Tape t;
      auto x = t.leaf(g.n, d_in, g.x, false);
      auto layer = gcn_layer(d_in, d_out, weight, bias);
      auto out = gcn_conv(t, x, g.src, g.dst, g.w, layer);
      auto want = testutil::gcn_dense_oracle(g.n, d_in, d_out, g.x, g.src, g.dst, g.w, weight,
                                             bias);
      for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(out.value()[i] == doctest::Approx(want[i]).epsilon(1e-10));
    }
    for (Aggr aggr : {Aggr::add, Aggr::mean, Aggr::max}) {
      std::vector<double> wn(d_in * d_out);
      for (auto& v : wn) v = rng.uniform(-1.5, 1.5);
      ad::Tape t;
      auto x = t.leaf(g.n, d_in, g.x, false);
      auto layer = graph_layer(d_in, d_out, weight, wn, bias, aggr);
      auto out = graph_conv(t, x, g.src, g.dst, g.w, layer);
      auto want = testutil::graph_conv_dense_oracle(g.n, d_in, d_out, g.x, g.src, g.dst, g.w,
                                                    weight, wn, bias, aggr);
      for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(out.value()[i] == doctest::Approx(want[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("pooling") {
  ad::Tape t;
  auto x = t.leaf(2, 2, std::vector<double>{1, 2, 3, 4}, false);
  std::vector<int> ids = {0, 0};
  auto mean = pool(t, x, ids, 1, Pooling::mean);
  CHECK(mean.value()[0] == doctest::Approx(2.0));
  CHECK(mean.value()[1] == doctest::Approx(3.0));

  auto solo = t.leaf(1, 2, std::vector<double>{5, 6}, false);
  std::vector<int> one = {0};
  auto add = pool(t, solo, one, 1, Pooling::add);
  CHECK(add.value()[0] == 5.0);

  auto col = t.leaf(3, 1, std::vector<double>{1, 5, 2}, false);
  std::vector<int> zeros = {0, 0, 0};
  CHECK(pool(t, col, zeros, 1, Pooling::max).value()[0] == 5.0);
}

TEST_CASE("dense, dropout, batch norm, embedding") {
  SUBCASE("dropout is the identity in eval mode") {
    ad::Tape t;
    Rng rng(1);
    auto x = t.leaf(2, 2, std::vector<double>{1, 2, 3, 4}, false);
    auto out = dropout(t, x, 0.5, /*training=*/false, rng);
    CHECK(out.value()[0] == 1.0);
    CHECK(out.value()[3] == 4.0);
  }
  SUBCASE("training dropout preserves expectation within 2 percent") {
    ad::Tape t;
    Rng rng(77);
    const double rate = 0.4;
    const std::size_t n = 100000;
    auto x = t.leaf(n, 1, std::vector<double>(n, 1.0), false);
    auto out = dropout(t, x, rate, /*training=*/true, rng);
    double mean = 0.0;
    for (double v : out.value()) mean += v;
    mean /= static_cast<double>(n);
    CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("batch norm of a constant column is beta") {
    ad::Tape t;
    BatchNormLayer bn;
    bn.gamma = Param::matrix("g", 1, 1, ParamKind::bn_scale);
    bn.gamma.value = {2.0};
    bn.beta = Param::matrix("b", 1, 1, ParamKind::bn_shift);
    bn.beta.value = {0.25};
    bn.running_mean = {0.0};
    bn.running_var = {1.0};
    bn.momentum = 0.5;
    bn.eps = 1e-5;
    auto x = t.leaf(4, 1, std::vector<double>(4, 3.0), false);
    auto out = batch_norm(t, x, bn, /*training=*/true);
    for (double v : out.value()) CHECK(v == doctest::Approx(0.25));
    // running stats moved toward the batch stats
    CHECK(bn.running_mean[0] == doctest::Approx(1.5));
    CHECK(bn.running_var[0] == doctest::Approx(0.5));
  }
  SUBCASE("batch norm eval uses running stats") {
    ad::Tape t;
    BatchNormLayer bn;
    bn.gamma = Param::matrix("g", 1, 1, ParamKind::bn_scale);
    bn.gamma.value = {1.0};
    bn.beta = Param::matrix("b", 1, 1, ParamKind::bn_shift);
    bn.running_mean = {2.0};
    bn.running_var = {4.0};
    bn.eps = 0.0;
    auto x = t.leaf(1, 1, std::vector<double>{4.0}, false);
    auto out = batch_norm(t, x, bn, /*training=*/false);
    CHECK(out.value()[0] == doctest::Approx(1.0));
  }
  SUBCASE("embedding looks up rows and validates ids") {
    ad::Tape t;
    EmbeddingLayer emb;
    emb.table = Param::matrix("table", 3, 2);
    emb.table.value = {1, 2, 3, 4, 5, 6};
    std::vector<int> ids = {0, 0};
    auto out = embedding(t, ids, emb);
    CHECK(out.value()[0] == 1.0);
    CHECK(out.value()[2] == 1.0);
    CHECK(out.value()[3] == 2.0);
    std::vector<int> bad = {3};
    CHECK_THROWS_AS(embedding(t, bad, emb), Error);
  }
}

TEST_CASE("loss hand values") {
  ad::Tape t;
  SUBCASE("uniform logits give ln C") {
    auto logits = t.leaf(1, 2, std::vector<double>{0.0, 0.0}, false);
    std::vector<int> labels = {0};
    CHECK(ad::cross_entropy(logits, labels).scalar() == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("satisfied margin gives zero") {
    auto logits = t.leaf(1, 2, std::vector<double>{2.0, 0.5}, false);
    std::vector<int> labels = {0};
    CHECK(ad::multi_margin(logits, labels).scalar() == doctest::Approx(0.0));
  }
  SUBCASE("violated margin") {
    auto logits = t.leaf(1, 2, std::vector<double>{0.2, 0.5}, false);
    std::vector<int> labels = {0};
    CHECK(ad::multi_margin(logits, labels).scalar() == doctest::Approx(0.65));
  }
}

TEST_CASE("uniform logit shifts keep decisions and margins") {
  Rng rng(5);
  for (int round = 0; round < 20; ++round) {
    const std::size_t b = 4, c = 3;
    std::vector<double> logits(b * c);
    for (auto& v : logits) v = rng.uniform(-3.0, 3.0);
    std::vector<int> labels(b);
    for (auto& y : labels) y = static_cast<int>(rng.uniform_int(0, 2));
    const double shift = rng.uniform(-5.0, 5.0);
    std::vector<double> shifted = logits;
    for (auto& v : shifted) v += shift;

    ad::Tape t;
    auto a = t.leaf(b, c, logits, false);
    auto s = t.leaf(b, c, shifted, false);

    // argmax rows unchanged
    for (std::size_t i = 0; i < b; ++i) {
      std::size_t am1 = 0, am2 = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (logits[i * c + j] > logits[i * c + am1]) am1 = j;
        if (shifted[i * c + j] > shifted[i * c + am2]) am2 = j;
      }
      CHECK(am1 == am2);
    }
    // multi-margin value is shift-invariant; cross-entropy too (softmax)
    CHECK(ad::multi_margin(a, labels).scalar() ==
          doctest::Approx(ad::multi_margin(s, labels).scalar()).epsilon(1e-12));
    CHECK(ad::cross_entropy(a, labels).scalar() ==
          doctest::Approx(ad::cross_entropy(s, labels).scalar()).epsilon(1e-10));
  }
}
