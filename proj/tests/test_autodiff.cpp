#include <doctest.h>

#include <cmath>

#include "procgcn/autodiff.hpp"
#include "procgcn/rng.hpp"
#include "test_helpers.hpp"

using namespace procgcn;

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) {
    x = rng.uniform(lo, hi);
    // keep clear of relu/max kinks so finite differences stay clean
    if (std::abs(x) < 1e-3) x = x < 0 ? -1e-3 : 1e-3;
  }
  return v;
}

}  // namespace

TEST_CASE("op forward hand values") {
  ad::Tape t;
  SUBCASE("matmul") {
    auto a = t.leaf(1, 2, std::vector<double>{1, 2}, false);
    auto b = t.leaf(2, 1, std::vector<double>{3, 4}, false);
    CHECK(ad::matmul(a, b).value()[0] == doctest::Approx(11.0));
  }
  SUBCASE("segment mean") {
    auto v = t.leaf(3, 1, std::vector<double>{1, 3, 5}, false);
    std::vector<int> ids = {0, 0, 1};
    auto out = ad::segment_reduce(v, ids, 2, ad::Reduce::mean);
    CHECK(out.value()[0] == doctest::Approx(2.0));
    CHECK(out.value()[1] == doctest::Approx(5.0));
  }
  SUBCASE("gelu fixes 0") {
    auto x = t.leaf(1, 1, std::vector<double>{0.0}, false);
    CHECK(ad::gelu(x).value()[0] == doctest::Approx(0.0));
  }
  SUBCASE("empty segment yields zeros for every mode") {
    auto v = t.leaf(2, 2, std::vector<double>{1, 2, 3, 4}, false);
    std::vector<int> ids = {0, 0};
    for (auto mode : {ad::Reduce::sum, ad::Reduce::mean, ad::Reduce::max}) {
      auto out = ad::segment_reduce(v, ids, 2, mode);
      CHECK(out.value()[2] == 0.0);
      CHECK(out.value()[3] == 0.0);
    }
  }
  SUBCASE("row broadcast add") {
    auto a = t.leaf(2, 2, std::vector<double>{1, 2, 3, 4}, false);
    auto b = t.leaf(1, 2, std::vector<double>{10, 20}, false);
    auto out = ad::add(a, b);
    CHECK(out.value()[0] == 11);
    CHECK(out.value()[3] == 24);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("d(sum x*x)/dx = 2x") {
    ad::Tape t;
    auto x = t.leaf(1, 1, std::vector<double>{3.0}, true);
    auto loss = ad::sum(ad::mul(x, x));
    t.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
  SUBCASE("unused leaf gets zero grad") {
    ad::Tape t;
    auto x = t.leaf(1, 1, std::vector<double>{3.0}, true);
    auto y = t.leaf(1, 1, std::vector<double>{2.0}, true);
    t.backward(ad::sum(ad::mul(x, x)));
    CHECK(y.grad()[0] == 0.0);
  }
  SUBCASE("backward on a non-scalar throws") {
    ad::Tape t;
    auto x = t.leaf(1, 2, std::vector<double>{1.0, 2.0}, true);
    auto y = ad::scale(x, 2.0);
    CHECK_THROWS_AS(t.backward(y), Error);
  }
  SUBCASE("gradients accumulate: two backwards double the grads exactly") {
    ad::Tape t;
    auto x = t.leaf(2, 1, std::vector<double>{1.5, -0.5}, true);
    auto loss = ad::sum(ad::mul(ad::tanh_act(x), x));
    t.backward(loss);
    std::vector<double> once(x.grad().begin(), x.grad().end());
    t.backward(loss);
    for (std::size_t i = 0; i < once.size(); ++i)
      CHECK(x.grad()[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-15));
  }
  SUBCASE("non-finite forward values raise NumericError") {
    ad::Tape t;
    auto x = t.leaf(1, 1, std::vector<double>{-1.0}, true);
    CHECK_THROWS_AS(ad::log_op(x), NumericError);
    auto zero = t.leaf(1, 1, std::vector<double>{0.0}, true);
    CHECK_THROWS_AS(ad::div(x, zero), NumericError);
  }
}

TEST_CASE("segment_reduce(sum) equals the indicator-matrix product") {
  Rng rng(7);
  for (int round = 0; round < 30; ++round) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 12));
    const std::size_t d = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const std::size_t segs = static_cast<std::size_t>(rng.uniform_int(1, 4));
    auto vals = random_values(rng, n * d);
    std::vector<int> ids(n);
    for (auto& id : ids) id = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(segs) - 1));

    ad::Tape t;
    auto v = t.leaf(n, d, vals, false);
    auto out = ad::segment_reduce(v, ids, segs, ad::Reduce::sum);

    // dense oracle: S[segs x n] indicator, result = S * V
    std::vector<double> want(segs * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        want[static_cast<std::size_t>(ids[i]) * d + j] += vals[i * d + j];
    for (std::size_t k = 0; k < want.size(); ++k)
      CHECK(out.value()[k] == doctest::Approx(want[k]).epsilon(1e-12));
  }
}

// Every differentiable op passes a central finite-difference check at
// randomized points nudged away from kinks.
TEST_CASE("finite-difference checks for every op") {
  Rng rng(2024);

  // builds a scalar loss from op(x) via a fixed random projection
  auto check_unary = [&](const char* name, auto op, double lo, double hi) {
    CAPTURE(name);
    for (int round = 0; round < 5; ++round) {
      const std::size_t r = 2, c = 3;
      auto x0 = random_values(rng, r * c, lo, hi);
      auto proj = random_values(rng, r * c);
      auto f = [&](std::span<const double> xs) {
        ad::Tape t;
        auto x = t.leaf(r, c, xs, false);
        auto p = t.leaf(r, c, proj, false);
        return ad::sum(ad::mul(op(x), p)).scalar();
      };
      ad::Tape t;
      auto x = t.leaf(r, c, x0, true);
      auto p = t.leaf(r, c, proj, false);
      t.backward(ad::sum(ad::mul(op(x), p)));
      CHECK(testutil::fd_max_rel_error(f, x0, x.grad()) <= 1e-4);
    }
  };

  check_unary("relu", [](ad::Tensor x) { return ad::relu(x); }, -2, 2);
  check_unary("leaky_relu", [](ad::Tensor x) { return ad::leaky_relu(x); }, -2, 2);
  check_unary("elu", [](ad::Tensor x) { return ad::elu(x); }, -2, 2);
  check_unary("tanh", [](ad::Tensor x) { return ad::tanh_act(x); }, -2, 2);
  check_unary("softplus", [](ad::Tensor x) { return ad::softplus(x); }, -2, 2);
  check_unary("gelu", [](ad::Tensor x) { return ad::gelu(x); }, -2, 2);
  check_unary("sqrt", [](ad::Tensor x) { return ad::sqrt_op(x); }, 0.1, 4);
  check_unary("log", [](ad::Tensor x) { return ad::log_op(x); }, 0.1, 4);
  check_unary("abs", [](ad::Tensor x) { return ad::abs_op(x); }, -2, 2);
  check_unary("scale", [](ad::Tensor x) { return ad::scale(x, -1.7); }, -2, 2);
  check_unary("add_scalar", [](ad::Tensor x) { return ad::add_scalar(x, 0.3); }, -2, 2);
  check_unary("softmax_rows", [](ad::Tensor x) { return ad::softmax_rows(x); }, -2, 2);

  SUBCASE("shape-changing reductions and slices") {
    const std::size_t r = 2, cdim = 3;
    auto x0 = random_values(rng, r * cdim);
    auto proj = random_values(rng, r * 2);  // matches the slice width

    auto check_shapechange = [&](const char* name, auto make_loss) {
      CAPTURE(name);
      auto f = [&](std::span<const double> xs) {
        ad::Tape t;
        auto x = t.leaf(r, cdim, xs, false);
        return make_loss(t, x).scalar();
      };
      ad::Tape t;
      auto x = t.leaf(r, cdim, x0, true);
      t.backward(make_loss(t, x));
      CHECK(testutil::fd_max_rel_error(f, x0, x.grad()) <= 1e-4);
    };
    check_shapechange("mean", [&](ad::Tape&, ad::Tensor x) { return ad::mean(x); });
    check_shapechange("sum", [&](ad::Tape&, ad::Tensor x) { return ad::sum(x); });
    check_shapechange("slice_cols", [&](ad::Tape& t, ad::Tensor x) {
      auto p = t.leaf(r, 2, proj, false);
      return ad::sum(ad::mul(ad::slice_cols(x, 1, 3), p));
    });
  }

  SUBCASE("binary ops, both sides") {
    auto check_binary = [&](const char* name, auto op, bool broadcast) {
      CAPTURE(name);
      const std::size_t r = 3, c = 2;
      auto a0 = random_values(rng, r * c, 0.5, 2.0);  // positive keeps div smooth
      auto b0 = random_values(rng, broadcast ? c : r * c, 0.5, 2.0);
      auto proj = random_values(rng, r * c);
      auto eval = [&](std::span<const double> av, std::span<const double> bv) {
        ad::Tape t;
        auto a = t.leaf(r, c, av, false);
        auto b = t.leaf(broadcast ? 1 : r, c, bv, false);
        auto p = t.leaf(r, c, proj, false);
        return ad::sum(ad::mul(op(a, b), p)).scalar();
      };
      ad::Tape t;
      auto a = t.leaf(r, c, a0, true);
      auto b = t.leaf(broadcast ? 1 : r, c, b0, true);
      auto p = t.leaf(r, c, proj, false);
      t.backward(ad::sum(ad::mul(op(a, b), p)));
      CHECK(testutil::fd_max_rel_error(
                [&](std::span<const double> xs) { return eval(xs, b0); }, a0, a.grad()) <= 1e-4);
      CHECK(testutil::fd_max_rel_error(
                [&](std::span<const double> xs) { return eval(a0, xs); }, b0, b.grad()) <= 1e-4);
    };
    for (bool broadcast : {false, true}) {
      check_binary("add", [](ad::Tensor a, ad::Tensor b) { return ad::add(a, b); }, broadcast);
      check_binary("sub", [](ad::Tensor a, ad::Tensor b) { return ad::sub(a, b); }, broadcast);
      check_binary("mul", [](ad::Tensor a, ad::Tensor b) { return ad::mul(a, b); }, broadcast);
      check_binary("div", [](ad::Tensor a, ad::Tensor b) { return ad::div(a, b); }, broadcast);
    }
  }

  SUBCASE("matmul, both sides") {
    const std::size_t mdim = 3, k = 4, n = 2;
    auto a0 = random_values(rng, mdim * k);
    auto b0 = random_values(rng, k * n);
    auto proj = random_values(rng, mdim * n);
    auto eval = [&](std::span<const double> av, std::span<const double> bv) {
      ad::Tape t;
      auto a = t.leaf(mdim, k, av, false);
      auto b = t.leaf(k, n, bv, false);
      auto p = t.leaf(mdim, n, proj, false);
      return ad::sum(ad::mul(ad::matmul(a, b), p)).scalar();
    };
    ad::Tape t;
    auto a = t.leaf(mdim, k, a0, true);
    auto b = t.leaf(k, n, b0, true);
    auto p = t.leaf(mdim, n, proj, false);
    t.backward(ad::sum(ad::mul(ad::matmul(a, b), p)));
    CHECK(testutil::fd_max_rel_error(
              [&](std::span<const double> xs) { return eval(xs, b0); }, a0, a.grad()) <= 1e-4);
    CHECK(testutil::fd_max_rel_error(
              [&](std::span<const double> xs) { return eval(a0, xs); }, b0, b.grad()) <= 1e-4);
  }

  SUBCASE("gather, concat, segment, edge ops, losses") {
    const std::size_t n = 4, d = 3;
    auto x0 = random_values(rng, n * d);
    std::vector<int> gather_ids = {2, 0, 3, 3, 1};
    std::vector<int> seg_ids = {0, 1, 0, 2};
    std::vector<int> src = {0, 1, 2}, dst = {1, 2, 3};
    std::vector<double> w = {0.7, 0.2, 0.9};
    std::vector<double> self_coeff = {0.5, 1.0, 0.25, 0.8};
    std::vector<int> labels = {1, 0, 2, 1};

    auto check_x = [&](const char* name, auto make_loss) {
      CAPTURE(name);
      auto f = [&](std::span<const double> xs) {
        ad::Tape t;
        auto x = t.leaf(n, d, xs, false);
        return make_loss(t, x).scalar();
      };
      ad::Tape t;
      auto x = t.leaf(n, d, x0, true);
      t.backward(make_loss(t, x));
      CHECK(testutil::fd_max_rel_error(f, x0, x.grad()) <= 1e-4);
    };

    // projections are drawn once per check so the loss is a fixed function
    const auto proj_gather = random_values(rng, gather_ids.size() * d);
    check_x("row_gather", [&](ad::Tape& t, ad::Tensor x) {
      auto proj = t.leaf(gather_ids.size(), d, proj_gather, false);
      return ad::sum(ad::mul(ad::row_gather(x, gather_ids), proj));
    });
    const auto other_vals = random_values(rng, n * 2);
    const auto proj_concat = random_values(rng, n * (d + 2));
    check_x("concat_cols", [&](ad::Tape& t, ad::Tensor x) {
      auto other = t.leaf(n, 2, other_vals, false);
      auto proj = t.leaf(n, d + 2, proj_concat, false);
      return ad::sum(ad::mul(ad::concat_cols(x, other), proj));
    });
    const auto proj_seg = random_values(rng, 3 * d);
    const auto proj_nodes = random_values(rng, n * d);
    for (auto mode : {ad::Reduce::sum, ad::Reduce::mean, ad::Reduce::max}) {
      check_x("segment_reduce", [&](ad::Tape& t, ad::Tensor x) {
        auto proj = t.leaf(3, d, proj_seg, false);
        return ad::sum(ad::mul(ad::segment_reduce(x, seg_ids, 3, mode), proj));
      });
      check_x("edge_aggregate", [&](ad::Tape& t, ad::Tensor x) {
        auto proj = t.leaf(n, d, proj_nodes, false);
        return ad::sum(ad::mul(ad::edge_aggregate(x, src, dst, w, mode), proj));
      });
    }
    check_x("edge_propagate", [&](ad::Tape& t, ad::Tensor x) {
      auto proj = t.leaf(n, d, proj_nodes, false);
      return ad::sum(ad::mul(ad::edge_propagate(x, src, dst, w, self_coeff), proj));
    });
    check_x("cross_entropy", [&](ad::Tape&, ad::Tensor x) {
      return ad::cross_entropy(x, labels);
    });
    check_x("multi_margin", [&](ad::Tape&, ad::Tensor x) {
      return ad::multi_margin(x, labels);
    });
  }
}

TEST_CASE("shape and index errors") {
  ad::Tape t;
  auto a = t.leaf(2, 3, std::vector<double>(6, 1.0), false);
  auto b = t.leaf(3, 3, std::vector<double>(9, 1.0), false);
  CHECK_THROWS_AS(ad::add(a, b), Error);
  CHECK_THROWS_AS(ad::matmul(a, a), Error);

  std::vector<int> bad_ids = {5};
  CHECK_THROWS_AS(ad::row_gather(a, bad_ids), Error);
  std::vector<int> src = {0}, dst = {9};
  std::vector<double> w = {0.5};
  CHECK_THROWS_AS(ad::edge_aggregate(a, src, dst, w, ad::Reduce::sum), Error);
}
