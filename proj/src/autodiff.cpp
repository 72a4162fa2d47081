#include "procgcn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace procgcn::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

std::size_t Tensor::rows() const { return tape_->node(id_).rows; }
std::size_t Tensor::cols() const { return tape_->node(id_).cols; }

std::span<const double> Tensor::value() const {
  const auto& n = tape_->node(id_);
  return {n.val.data(), n.val.size()};
}

std::span<const double> Tensor::grad() const {
  const auto& n = tape_->node(id_);
  return {n.grad.data(), n.grad.size()};
}

double Tensor::scalar() const {
  const auto& n = tape_->node(id_);
  if (n.rows != 1 || n.cols != 1) throw Error("scalar() on a non-scalar tensor");
  return n.val[0];
}

// Shared helpers for building ops: allocates the output node, checks the
// forward result for NaN/Inf, and registers the adjoint.
struct OpBuilder {
  static std::size_t alloc(Tape& t, std::size_t rows, std::size_t cols, bool requires_grad) {
    Tape::Node n;
    n.rows = rows;
    n.cols = cols;
    n.val.assign(rows * cols, 0.0);
    n.requires_grad = requires_grad;
    t.nodes_.push_back(std::move(n));
    return t.nodes_.size() - 1;
  }
  static std::vector<double>& val(Tape& t, std::size_t id) { return t.node(id).val; }
  static const std::vector<double>& cval(const Tape& t, std::size_t id) {
    return t.node(id).val;
  }
  static double* grad_buf(Tape& t, std::size_t id) {
    auto& n = t.node(id);
    return n.requires_grad ? n.grad.data() : nullptr;
  }
  static const double* out_grad(Tape& t, std::size_t id) { return t.node(id).grad.data(); }
  static void check_finite(Tape& t, std::size_t id, const char* op) {
    for (double v : t.node(id).val)
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
  static void record(Tape& t, bool requires_grad, std::function<void(Tape&)> fn) {
    if (requires_grad && t.grad_enabled_) t.records_.push_back({std::move(fn)});
  }
  static bool needs_grad(const Tensor& t) { return t.tape()->node(t.id_).requires_grad; }
  static std::size_t id(const Tensor& t) { return t.id_; }
  static Tensor wrap(Tape& t, std::size_t id) { return Tensor(&t, id); }
};

using OB = OpBuilder;

Tensor Tape::leaf(std::size_t rows, std::size_t cols, std::span<const double> data,
                  bool requires_grad) {
  if (data.size() != rows * cols) throw Error("leaf data size does not match shape");
  std::size_t id = OB::alloc(*this, rows, cols, requires_grad && grad_enabled_);
  auto& n = node(id);
  std::copy(data.begin(), data.end(), n.val.begin());
  n.is_leaf = true;
  if (n.requires_grad) n.grad.assign(rows * cols, 0.0);
  return Tensor(this, id);
}

Tensor Tape::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  std::size_t id = OB::alloc(*this, rows, cols, requires_grad && grad_enabled_);
  auto& n = node(id);
  n.is_leaf = true;
  if (n.requires_grad) n.grad.assign(rows * cols, 0.0);
  return Tensor(this, id);
}

Tensor Tape::use(Param& p) {
  auto it = bindings_.find(&p);
  if (it != bindings_.end()) {
    const Node& n = node(it->second);
    if (n.rows != p.rows || n.cols != p.cols)
      throw Error("a bound Param died before the tape was cleared: " + p.name);
    return Tensor(this, it->second);
  }
  Tensor t = leaf(p.rows, p.cols, {p.value.data(), p.value.size()}, true);
  bindings_[&p] = t.id_;
  return t;
}

void Tape::collect_grads() {
  for (auto& [param, id] : bindings_) {
    auto& n = node(id);
    if (!n.requires_grad) continue;
    auto* p = const_cast<Param*>(param);
    p->grad.assign(n.grad.begin(), n.grad.end());
  }
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape_ != this) throw Error("loss tensor belongs to another tape");
  auto& ln = node(loss.id_);
  if (ln.rows != 1 || ln.cols != 1) throw Error("backward requires a scalar loss");

  for (auto& n : nodes_) {
    if (!n.requires_grad) continue;
    if (n.grad.empty())
      n.grad.assign(n.val.size(), 0.0);
    else if (!n.is_leaf)
      std::fill(n.grad.begin(), n.grad.end(), 0.0);
  }
  if (!ln.requires_grad) return;  // loss disconnected from any trainable leaf
  ln.grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward(*this);
}

void Tape::clear() {
  nodes_.clear();
  records_.clear();
  bindings_.clear();
}

// --- binary elementwise -----------------------------------------------------

namespace {

enum class BinOp { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  Tape& t = *a.tape();
  if (b.tape() != &t) throw Error("operands belong to different tapes");
  const std::size_t r = a.rows(), c = a.cols();
  const bool broadcast = !(b.rows() == r && b.cols() == c);
  if (broadcast && !(b.rows() == 1 && b.cols() == c))
    throw Error(std::string(name) + ": incompatible shapes");

  const bool rg = OB::needs_grad(a) || OB::needs_grad(b);
  std::size_t out = OB::alloc(t, r, c, rg);
  const auto& av = OB::cval(t, OB::id(a));
  const auto& bv = OB::cval(t, OB::id(b));
  auto& ov = OB::val(t, out);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double x = av[i * c + j];
      const double y = bv[broadcast ? j : i * c + j];
      double v = 0.0;
      switch (op) {
        case BinOp::add: v = x + y; break;
        case BinOp::sub: v = x - y; break;
        case BinOp::mul: v = x * y; break;
        case BinOp::div: v = x / y; break;
      }
      ov[i * c + j] = v;
    }
  }
  OB::check_finite(t, out, name);

  const std::size_t aid = OB::id(a), bid = OB::id(b);
  OB::record(t, rg, [out, aid, bid, r, c, broadcast, op](Tape& tp) {
    const double* og = OB::out_grad(tp, out);
    double* ga = OB::grad_buf(tp, aid);
    double* gb = OB::grad_buf(tp, bid);
    const auto& av = OB::cval(tp, aid);
    const auto& bv = OB::cval(tp, bid);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t k = i * c + j;
        const std::size_t kb = broadcast ? j : k;
        const double g = og[k];
        switch (op) {
          case BinOp::add:
            if (ga) ga[k] += g;
            if (gb) gb[kb] += g;
            break;
          case BinOp::sub:
            if (ga) ga[k] += g;
            if (gb) gb[kb] -= g;
            break;
          case BinOp::mul:
            if (ga) ga[k] += g * bv[kb];
            if (gb) gb[kb] += g * av[k];
            break;
          case BinOp::div: {
            const double y = bv[kb];
            if (ga) ga[k] += g / y;
            if (gb) gb[kb] -= g * av[k] / (y * y);
            break;
          }
        }
      }
    }
  });
  return OB::wrap(t, out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::div, "div"); }

// --- scalar ops --------------------------------------------------------------

namespace {

Tensor affine_scalar(const Tensor& a, double mul_c, double add_c, const char* name) {
  Tape& t = *a.tape();
  const bool rg = OB::needs_grad(a);
  std::size_t out = OB::alloc(t, a.rows(), a.cols(), rg);
  const auto& av = OB::cval(t, OB::id(a));
  auto& ov = OB::val(t, out);
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = mul_c * av[i] + add_c;
  OB::check_finite(t, out, name);
  const std::size_t aid = OB::id(a);
  OB::record(t, rg, [out, aid, mul_c](Tape& tp) {
    const double* og = OB::out_grad(tp, out);
    if (double* ga = OB::grad_buf(tp, aid)) {
      const std::size_t n = OB::cval(tp, aid).size();
      for (std::size_t i = 0; i < n; ++i) ga[i] += mul_c * og[i];
    }
  });
  return OB::wrap(t, out);
}

}  // namespace

Tensor scale(const Tensor& a, double c) { return affine_scalar(a, c, 0.0, "scale"); }
Tensor add_scalar(const Tensor& a, double c) { return affine_scalar(a, 1.0, c, "add_scalar"); }

// --- matmul -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& t = *a.tape();
  if (b.tape() != &t) throw Error("operands belong to different tapes");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw Error("matmul: inner dimensions differ");

  const bool rg = OB::needs_grad(a) || OB::needs_grad(b);
  std::size_t out = OB::alloc(t, m, n, rg);
  {
    ConstMap A(OB::cval(t, OB::id(a)).data(), static_cast<long>(m), static_cast<long>(k));
    ConstMap B(OB::cval(t, OB::id(b)).data(), static_cast<long>(k), static_cast<long>(n));
    MutMap C(OB::val(t, out).data(), static_cast<long>(m), static_cast<long>(n));
    C.noalias() = A * B;
  }
  OB::check_finite(t, out, "matmul");

  const std::size_t aid = OB::id(a), bid = OB::id(b);
  OB::record(t, rg, [out, aid, bid, m, k, n](Tape& tp) {
    ConstMap G(OB::out_grad(tp, out), static_cast<long>(m), static_cast<long>(n));
    ConstMap A(OB::cval(tp, aid).data(), static_cast<long>(m), static_cast<long>(k));
    ConstMap B(OB::cval(tp, bid).data(), static_cast<long>(k), static_cast<long>(n));
    if (double* ga = OB::grad_buf(tp, aid)) {
      MutMap GA(ga, static_cast<long>(m), static_cast<long>(k));
      GA.noalias() += G * B.transpose();
    }
    if (double* gb = OB::grad_buf(tp, bid)) {
      MutMap GB(gb, static_cast<long>(k), static_cast<long>(n));
      GB.noalias() += A.transpose() * G;
    }
  });
  return OB::wrap(t, out);
}

// --- elementwise activations --------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Bwd dfn) {
  Tape& t = *a.tape();
  const bool rg = OB::needs_grad(a);
  std::size_t out = OB::alloc(t, a.rows(), a.cols(), rg);
  const auto& av = OB::cval(t, OB::id(a));
  auto& ov = OB::val(t, out);
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = fwd(av[i]);
  OB::check_finite(t, out, name);
  const std::size_t aid = OB::id(a);
  OB::record(t, rg, [out, aid, dfn](Tape& tp) {
    const double* og = OB::out_grad(tp, out);
    const auto& x = OB::cval(tp, aid);
    const auto& y = OB::cval(tp, out);
    if (double* ga = OB::grad_buf(tp, aid))
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += dfn(x[i], y[i]) * og[i];
  });
  return OB::wrap(t, out);
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      a, "leaky_relu", [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& a) {
  return unary(
      a, "elu", [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Tensor tanh_act(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, "softplus",
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor gelu(const Tensor& a) {
  return unary(
      a, "gelu",
      [](double x) {
        const double u = kGeluC * (x + kGeluA * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
      },
      [](double x, double) {
        const double u = kGeluC * (x + kGeluA * x * x * x);
        const double th = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

Tensor sqrt_op(const Tensor& a) {
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor log_op(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor abs_op(const Tensor& a) {
  return unary(
      a, "abs", [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

// --- gather / concat / slice ----------------------------------------------------

Tensor row_gather(const Tensor& m, std::span<const int> indices) {
  Tape& t = *m.tape();
  const std::size_t rows = m.rows(), cols = m.cols();
  for (int idx : indices)
    if (idx < 0 || static_cast<std::size_t>(idx) >= rows)
      throw Error("row_gather: index out of range");

  const bool rg = OB::needs_grad(m);
  std::size_t out = OB::alloc(t, indices.size(), cols, rg);
  const auto& mv = OB::cval(t, OB::id(m));
  auto& ov = OB::val(t, out);
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(mv.data() + static_cast<std::size_t>(indices[i]) * cols, cols,
                ov.data() + i * cols);

  const std::size_t mid = OB::id(m);
  std::vector<int> idx(indices.begin(), indices.end());
  OB::record(t, rg, [out, mid, cols, idx = std::move(idx)](Tape& tp) {
    const double* og = OB::out_grad(tp, out);
    if (double* gm = OB::grad_buf(tp, mid)) {
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j)
          gm[static_cast<std::size_t>(idx[i]) * cols + j] += og[i * cols + j];
    }
  });
  return OB::wrap(t, out);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  Tape& t = *a.tape();
  if (b.tape() != &t) throw Error("operands belong to different tapes");
  if (a.rows() != b.rows()) throw Error("concat_cols: row counts differ");
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();

  const bool rg = OB::needs_grad(a) || OB::needs_grad(b);
  std::size_t out = OB::alloc(t, r, ca + cb, rg);
  const auto& av = OB::cval(t, OB::id(a));
  const auto& bv = OB::cval(t, OB::id(b));
  auto& ov = OB::val(t, out);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(av.data() + i * ca, ca, ov.data() + i * (ca + cb));
    std::copy_n(bv.data() + i * cb, cb, ov.data() + i * (ca + cb) + ca);
  }

  const std::size_t aid = OB::id(a), bid = OB::id(b);
  OB::record(t, rg, [out, aid, bid, r, ca, cb](Tape& tp) {
    const double* og = OB::out_grad(tp, out);
    double* ga = OB::grad_buf(tp, aid);
    double* gb = OB::grad_buf(tp, bid);
    for (std::size_t i = 0; i < r; ++i) {
      if (ga)
        for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += og[i * (ca + cb) + j];
      if (gb)
        for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += og[i * (ca + cb) + ca + j];
    }
  });
  return OB::wrap(t, out);
}

Tensor slice_cols(const Tensor& a, std::size_t lo, std::size_t hi) {
  Tape& t = *a.tape();
  if (lo > hi || hi > a.cols()) throw Error("slice_cols: bad range");
  const std::size_t r = a.rows(), c = a.cols(), w = hi - lo;

  const bool rg = OB::needs_grad(a);
  std::size_t out = OB::alloc(t, r, w, rg);
  const auto& av = OB::cval(t, OB::id(a));
  auto& ov = OB::val(t, out);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(av.data() + i * c + lo, w, ov.data() + i * w);

  const std::size_t aid = OB::id(a);
  OB::record(t, rg, [out, aid, r, c, w, lo](Tape& tp) {
    const double* og = OB::out_grad(tp, out);
    if (double* ga = OB::grad_buf(tp, aid))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) ga[i * c + lo + j] += og[i * w + j];
  });
  return OB::wrap(t, out);
}

// --- segment / edge ops -----------------------------------------------------------

Tensor segment_reduce(const Tensor& values, std::span<const int> ids, std::size_t n_segments,
                      Reduce mode) {
  Tape& t = *values.tape();
  const std::size_t n = values.rows(), d = values.cols();
  if (ids.size() != n) throw Error("segment_reduce: one id per row required");
  for (int s : ids)
    if (s < 0 || static_cast<std::size_t>(s) >= n_segments)
      throw Error("segment_reduce: segment id out of range");

  const bool rg = OB::needs_grad(values);
  std::size_t out = OB::alloc(t, n_segments, d, rg);
  const auto& xv = OB::cval(t, OB::id(values));
  auto& ov = OB::val(t, out);

  std::vector<std::size_t> counts(n_segments, 0);
  for (int s : ids) ++counts[static_cast<std::size_t>(s)];

  std::vector<int> argmax;  // row index per (segment, col), -1 = empty
  if (mode == Reduce::max) {
    argmax.assign(n_segments * d, -1);
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = static_cast<std::size_t>(ids[i]);
      for (std::size_t j = 0; j < d; ++j) {
        int& am = argmax[s * d + j];
        // first attaining row wins ties
        if (am < 0 || xv[i * d + j] > ov[s * d + j]) {
          am = static_cast<int>(i);
          ov[s * d + j] = xv[i * d + j];
        }
      }
    }
    // empty segments stay at 0
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = static_cast<std::size_t>(ids[i]);
      for (std::size_t j = 0; j < d; ++j) ov[s * d + j] += xv[i * d + j];
    }
    if (mode == Reduce::mean) {
      for (std::size_t s = 0; s < n_segments; ++s) {
        if (counts[s] == 0) continue;
        for (std::size_t j = 0; j < d; ++j) ov[s * d + j] /= static_cast<double>(counts[s]);
      }
    }
  }
  OB::check_finite(t, out, "segment_reduce");

  const std::size_t vid = OB::id(values);
  std::vector<int> ids_copy(ids.begin(), ids.end());
  OB::record(t, rg,
             [out, vid, d, mode, ids_copy = std::move(ids_copy), counts = std::move(counts),
              argmax = std::move(argmax)](Tape& tp) {
               const double* og = OB::out_grad(tp, out);
               double* gv = OB::grad_buf(tp, vid);
               if (!gv) return;
               if (mode == Reduce::max) {
                 for (std::size_t k = 0; k < argmax.size(); ++k)
                   if (argmax[k] >= 0)
                     gv[static_cast<std::size_t>(argmax[k]) * d + k % d] += og[k];
               } else {
                 for (std::size_t i = 0; i < ids_copy.size(); ++i) {
                   const auto s = static_cast<std::size_t>(ids_copy[i]);
                   const double inv =
                       mode == Reduce::mean ? 1.0 / static_cast<double>(counts[s]) : 1.0;
                   for (std::size_t j = 0; j < d; ++j) gv[i * d + j] += inv * og[s * d + j];
                 }
               }
             });
  return OB::wrap(t, out);
}

Tensor edge_propagate(const Tensor& x, std::span<const int> src, std::span<const int> dst,
                      std::span<const double> edge_coeff, std::span<const double> self_coeff) {
  Tape& t = *x.tape();
  const std::size_t n = x.rows(), d = x.cols(), e = src.size();
  if (dst.size() != e || edge_coeff.size() != e) throw Error("edge_propagate: ragged edge arrays");
  if (self_coeff.size() != n) throw Error("edge_propagate: one self coefficient per node");
  for (std::size_t k = 0; k < e; ++k)
    if (src[k] < 0 || dst[k] < 0 || static_cast<std::size_t>(src[k]) >= n ||
        static_cast<std::size_t>(dst[k]) >= n)
      throw Error("edge_propagate: edge index out of range");

  const bool rg = OB::needs_grad(x);
  std::size_t out = OB::alloc(t, n, d, rg);
  const auto& xv = OB::cval(t, OB::id(x));
  auto& ov = OB::val(t, out);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < d; ++j) ov[v * d + j] = self_coeff[v] * xv[v * d + j];
  for (std::size_t k = 0; k < e; ++k) {
    const auto s = static_cast<std::size_t>(src[k]), v = static_cast<std::size_t>(dst[k]);
    for (std::size_t j = 0; j < d; ++j) ov[v * d + j] += edge_coeff[k] * xv[s * d + j];
  }
  OB::check_finite(t, out, "edge_propagate");

  const std::size_t xid = OB::id(x);
  std::vector<int> sv(src.begin(), src.end()), dv(dst.begin(), dst.end());
  std::vector<double> ec(edge_coeff.begin(), edge_coeff.end()),
      sc(self_coeff.begin(), self_coeff.end());
  OB::record(t, rg,
             [out, xid, d, sv = std::move(sv), dv = std::move(dv), ec = std::move(ec),
              sc = std::move(sc)](Tape& tp) {
               const double* og = OB::out_grad(tp, out);
               double* gx = OB::grad_buf(tp, xid);
               if (!gx) return;
               for (std::size_t v = 0; v < sc.size(); ++v)
                 for (std::size_t j = 0; j < d; ++j) gx[v * d + j] += sc[v] * og[v * d + j];
               for (std::size_t k = 0; k < sv.size(); ++k) {
                 const auto s = static_cast<std::size_t>(sv[k]), v = static_cast<std::size_t>(dv[k]);
                 for (std::size_t j = 0; j < d; ++j) gx[s * d + j] += ec[k] * og[v * d + j];
               }
             });
  return OB::wrap(t, out);
}

Tensor edge_aggregate(const Tensor& x, std::span<const int> src, std::span<const int> dst,
                      std::span<const double> weights, Reduce mode) {
  Tape& t = *x.tape();
  const std::size_t n = x.rows(), d = x.cols(), e = src.size();
  if (dst.size() != e || weights.size() != e) throw Error("edge_aggregate: ragged edge arrays");
  for (std::size_t k = 0; k < e; ++k)
    if (src[k] < 0 || dst[k] < 0 || static_cast<std::size_t>(src[k]) >= n ||
        static_cast<std::size_t>(dst[k]) >= n)
      throw Error("edge_aggregate: edge index out of range");

  const bool rg = OB::needs_grad(x);
  std::size_t out = OB::alloc(t, n, d, rg);
  const auto& xv = OB::cval(t, OB::id(x));
  auto& ov = OB::val(t, out);

  std::vector<std::size_t> indeg(n, 0);
  for (int v : dst) ++indeg[static_cast<std::size_t>(v)];

  std::vector<int> argmax;  // edge index per (node, col), -1 = none
  if (mode == Reduce::max) {
    argmax.assign(n * d, -1);
    for (std::size_t k = 0; k < e; ++k) {
      const auto s = static_cast<std::size_t>(src[k]), v = static_cast<std::size_t>(dst[k]);
      for (std::size_t j = 0; j < d; ++j) {
        const double m = weights[k] * xv[s * d + j];
        int& am = argmax[v * d + j];
        if (am < 0 || m > ov[v * d + j]) {
          am = static_cast<int>(k);
          ov[v * d + j] = m;
        }
      }
    }
  } else {
    for (std::size_t k = 0; k < e; ++k) {
      const auto s = static_cast<std::size_t>(src[k]), v = static_cast<std::size_t>(dst[k]);
      for (std::size_t j = 0; j < d; ++j) ov[v * d + j] += weights[k] * xv[s * d + j];
    }
    if (mode == Reduce::mean) {
      for (std::size_t v = 0; v < n; ++v) {
        if (indeg[v] == 0) continue;
        for (std::size_t j = 0; j < d; ++j) ov[v * d + j] /= static_cast<double>(indeg[v]);
      }
    }
  }
  OB::check_finite(t, out, "edge_aggregate");

  const std::size_t xid = OB::id(x);
  std::vector<int> sv(src.begin(), src.end()), dv(dst.begin(), dst.end());
  std::vector<double> wv(weights.begin(), weights.end());
  OB::record(t, rg,
             [out, xid, d, mode, sv = std::move(sv), dv = std::move(dv), wv = std::move(wv),
              indeg = std::move(indeg), argmax = std::move(argmax)](Tape& tp) {
               const double* og = OB::out_grad(tp, out);
               double* gx = OB::grad_buf(tp, xid);
               if (!gx) return;
               if (mode == Reduce::max) {
                 for (std::size_t p = 0; p < argmax.size(); ++p) {
                   const int k = argmax[p];
                   if (k < 0) continue;
                   const auto s = static_cast<std::size_t>(sv[static_cast<std::size_t>(k)]);
                   gx[s * d + p % d] += wv[static_cast<std::size_t>(k)] * og[p];
                 }
               } else {
                 for (std::size_t k = 0; k < sv.size(); ++k) {
                   const auto s = static_cast<std::size_t>(sv[k]), v = static_cast<std::size_t>(dv[k]);
                   const double inv =
                       mode == Reduce::mean ? 1.0 / static_cast<double>(indeg[v]) : 1.0;
                   for (std::size_t j = 0; j < d; ++j)
                     gx[s * d + j] += inv * wv[k] * og[v * d + j];
                 }
               }
             });
  return OB::wrap(t, out);
}

// --- softmax / reductions / losses ----------------------------------------------

Tensor softmax_rows(const Tensor& a) {
  Tape& t = *a.tape();
  const std::size_t r = a.rows(), c = a.cols();
  const bool rg = OB::needs_grad(a);
  std::size_t out = OB::alloc(t, r, c, rg);
  const auto& av = OB::cval(t, OB::id(a));
  auto& ov = OB::val(t, out);
  for (std::size_t i = 0; i < r; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, av[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(av[i * c + j] - m);
    for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = std::exp(av[i * c + j] - m) / z;
  }
  OB::check_finite(t, out, "softmax_rows");

  const std::size_t aid = OB::id(a);
  OB::record(t, rg, [out, aid, r, c](Tape& tp) {
    const double* og = OB::out_grad(tp, out);
    const auto& y = OB::cval(tp, out);
    if (double* ga = OB::grad_buf(tp, aid)) {
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += og[i * c + j] * y[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          ga[i * c + j] += y[i * c + j] * (og[i * c + j] - dot);
      }
    }
  });
  return OB::wrap(t, out);
}

namespace {

Tensor full_reduce(const Tensor& a, bool take_mean, const char* name) {
  Tape& t = *a.tape();
  const bool rg = OB::needs_grad(a);
  std::size_t out = OB::alloc(t, 1, 1, rg);
  const auto& av = OB::cval(t, OB::id(a));
  double s = 0.0;
  for (double v : av) s += v;
  const double denom = take_mean ? static_cast<double>(av.size()) : 1.0;
  OB::val(t, out)[0] = s / denom;
  OB::check_finite(t, out, name);
  const std::size_t aid = OB::id(a);
  OB::record(t, rg, [out, aid, denom](Tape& tp) {
    const double g = OB::out_grad(tp, out)[0] / denom;
    if (double* ga = OB::grad_buf(tp, aid)) {
      const std::size_t n = OB::cval(tp, aid).size();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    }
  });
  return OB::wrap(t, out);
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t cols) {
  if (labels.size() != rows) throw Error("one label per logit row required");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= cols) throw Error("label out of range");
}

}  // namespace

Tensor sum(const Tensor& a) { return full_reduce(a, false, "sum"); }
Tensor mean(const Tensor& a) { return full_reduce(a, true, "mean"); }

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  Tape& t = *logits.tape();
  const std::size_t b = logits.rows(), c = logits.cols();
  check_labels(labels, b, c);

  const bool rg = OB::needs_grad(logits);
  std::size_t out = OB::alloc(t, 1, 1, rg);
  const auto& xv = OB::cval(t, OB::id(logits));

  std::vector<double> probs(b * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, xv[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(xv[i * c + j] - m);
    const double lse = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(xv[i * c + j] - lse);
    loss += lse - xv[i * c + static_cast<std::size_t>(labels[i])];
  }
  OB::val(t, out)[0] = loss / static_cast<double>(b);
  OB::check_finite(t, out, "cross_entropy");

  const std::size_t lid = OB::id(logits);
  std::vector<int> lab(labels.begin(), labels.end());
  OB::record(t, rg, [out, lid, b, c, probs = std::move(probs), lab = std::move(lab)](Tape& tp) {
    const double g = OB::out_grad(tp, out)[0] / static_cast<double>(b);
    if (double* gl = OB::grad_buf(tp, lid)) {
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j)
          gl[i * c + j] +=
              g * (probs[i * c + j] - (j == static_cast<std::size_t>(lab[i]) ? 1.0 : 0.0));
    }
  });
  return OB::wrap(t, out);
}

Tensor multi_margin(const Tensor& logits, std::span<const int> labels) {
  Tape& t = *logits.tape();
  const std::size_t b = logits.rows(), c = logits.cols();
  check_labels(labels, b, c);

  const bool rg = OB::needs_grad(logits);
  std::size_t out = OB::alloc(t, 1, 1, rg);
  const auto& xv = OB::cval(t, OB::id(logits));
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double xy = xv[i * c + static_cast<std::size_t>(labels[i])];
    for (std::size_t j = 0; j < c; ++j) {
      if (j == static_cast<std::size_t>(labels[i])) continue;
      loss += std::max(0.0, 1.0 - xy + xv[i * c + j]) / static_cast<double>(c);
    }
  }
  OB::val(t, out)[0] = loss / static_cast<double>(b);
  OB::check_finite(t, out, "multi_margin");

  const std::size_t lid = OB::id(logits);
  std::vector<int> lab(labels.begin(), labels.end());
  OB::record(t, rg, [out, lid, b, c, lab = std::move(lab)](Tape& tp) {
    const double g = OB::out_grad(tp, out)[0] / (static_cast<double>(b) * static_cast<double>(c));
    if (double* gl = OB::grad_buf(tp, lid)) {
      const auto& xv = OB::cval(tp, lid);
      for (std::size_t i = 0; i < b; ++i) {
        const auto y = static_cast<std::size_t>(lab[i]);
        const double xy = xv[i * c + y];
        for (std::size_t j = 0; j < c; ++j) {
          if (j == y) continue;
          if (1.0 - xy + xv[i * c + j] > 0.0) {
            gl[i * c + j] += g;
            gl[i * c + y] -= g;
          }
        }
      }
    }
  });
  return OB::wrap(t, out);
}

}  // namespace procgcn::ad
