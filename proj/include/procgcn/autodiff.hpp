#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "procgcn/error.hpp"

namespace procgcn {

enum class ParamKind { weight, bias, bn_scale, bn_shift };

/// A trainable array living outside any tape. Bound onto a tape as a leaf
/// tensor for each forward pass; gradients are copied back after backward.
struct Param {
  std::string name;
  std::size_t rows = 0, cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  ParamKind kind = ParamKind::weight;

  static Param matrix(std::string name, std::size_t rows, std::size_t cols,
                      ParamKind kind = ParamKind::weight) {
    Param p;
    p.name = std::move(name);
    p.rows = rows;
    p.cols = cols;
    p.value.assign(rows * cols, 0.0);
    p.grad.assign(rows * cols, 0.0);
    p.kind = kind;
    return p;
  }
  std::size_t size() const { return rows * cols; }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

namespace ad {

class Tape;

/// Lightweight handle to a node on a tape. All tensors are dense row-major
/// f64 matrices; scalars are 1x1.
class Tensor {
 public:
  Tensor() = default;
  bool defined() const { return tape_ != nullptr; }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  std::span<const double> value() const;
  std::span<const double> grad() const;
  double scalar() const;
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  friend struct OpBuilder;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct OpBuilder;

enum class Reduce { sum, mean, max };

/// Records forward operations and replays their adjoints in reverse. One tape
/// per training step per thread; `clear()` recycles it. Leaf gradients
/// accumulate across backward calls, interior gradients are scratch.
class Tape {
 public:
  Tensor leaf(std::size_t rows, std::size_t cols, std::span<const double> data,
              bool requires_grad);
  Tensor constant(std::size_t rows, std::size_t cols, std::span<const double> data) {
    return leaf(rows, cols, data, false);
  }
  Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);

  /// Binds a Param as a leaf, cached per tape generation so that every use of
  /// the same Param (model forward, L1 penalty) shares one node. The Param
  /// must outlive the tape generation, i.e. stay alive until clear().
  Tensor use(Param& p);

  /// Copies gradients of bound Params out of the tape into Param::grad.
  void collect_grads();

  void backward(const Tensor& loss);

  void clear();

  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class Tensor;
  friend struct OpBuilder;

  struct Node {
    std::size_t rows = 0, cols = 0;
    std::vector<double> val;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = false;
  };
  struct Record {
    std::function<void(Tape&)> backward;
  };

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  std::vector<Node> nodes_;
  std::vector<Record> records_;
  std::unordered_map<const Param*, std::size_t> bindings_;
  bool grad_enabled_ = true;
};

// Core ops. Binary elementwise ops accept equal shapes or a 1 x cols second
// operand broadcast over rows.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.01);
Tensor elu(const Tensor& a);  // alpha = 1
Tensor tanh_act(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor sqrt_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor abs_op(const Tensor& a);

Tensor row_gather(const Tensor& m, std::span<const int> indices);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t lo, std::size_t hi);

/// Per-segment row reduction; an empty segment yields zeros for every mode.
Tensor segment_reduce(const Tensor& values, std::span<const int> ids, std::size_t n_segments,
                      Reduce mode);

/// out[v] = self_coeff[v] * x[v] + sum over edges (s -> v) of coeff_e * x[s].
Tensor edge_propagate(const Tensor& x, std::span<const int> src, std::span<const int> dst,
                      std::span<const double> edge_coeff, std::span<const double> self_coeff);

/// Aggregates weighted neighbor messages w_e * x[src_e] at each destination.
/// mean divides by incoming-edge count; max takes the elementwise maximum
/// (zeros when a node has no incoming edge).
Tensor edge_aggregate(const Tensor& x, std::span<const int> src, std::span<const int> dst,
                      std::span<const double> weights, Reduce mode);

Tensor softmax_rows(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean over the batch of (1/C) * sum_{i != y} max(0, 1 - x_y + x_i).
Tensor multi_margin(const Tensor& logits, std::span<const int> labels);

}  // namespace ad
}  // namespace procgcn
