#pragma once

#include <span>
#include <vector>

#include "procgcn/autodiff.hpp"
#include "procgcn/rng.hpp"

namespace procgcn {

enum class Activation { relu, leaky_relu, elu, tanh, softplus, gelu };
enum class Aggr { add, mean, max };
enum class Pooling { mean, add, max };
enum class LossKind { cross_entropy, multi_margin };

/// Convolution with symmetric renormalization over the weighted chain with
/// self-loops: deg(v) = 1 + incoming weighted degree, edge coefficient
/// w / sqrt(deg(s) deg(t)), self coefficient 1 / deg(v).
struct GcnConvLayer {
  Param weight;  // d_in x d_out
  Param bias;    // 1 x d_out
};

/// Separate self and neighbor transforms; neighbor messages w * x_s are
/// combined by the layer's aggregation mode.
struct GraphConvLayer {
  Param weight_self;   // d_in x d_out
  Param weight_neigh;  // d_in x d_out
  Param bias;          // 1 x d_out
  Aggr aggr = Aggr::add;
};

struct DenseLayer {
  Param weight;  // d_in x d_out
  Param bias;    // 1 x d_out
  bool has_bias = true;
};

struct BatchNormLayer {
  Param gamma;  // 1 x d
  Param beta;   // 1 x d
  std::vector<double> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

struct EmbeddingLayer {
  Param table;  // vocab x dim
};

ad::Tensor gcn_conv(ad::Tape& tape, const ad::Tensor& x, std::span<const int> src,
                    std::span<const int> dst, std::span<const double> edge_weights,
                    GcnConvLayer& layer);

ad::Tensor graph_conv(ad::Tape& tape, const ad::Tensor& x, std::span<const int> src,
                      std::span<const int> dst, std::span<const double> edge_weights,
                      GraphConvLayer& layer);

ad::Tensor pool(ad::Tape& tape, const ad::Tensor& node_feats, std::span<const int> graph_id,
                std::size_t n_graphs, Pooling method);

ad::Tensor dense(ad::Tape& tape, const ad::Tensor& x, DenseLayer& layer);

/// Inverted dropout: kept activations are scaled by 1/(1-rate); identity when
/// not training.
ad::Tensor dropout(ad::Tape& tape, const ad::Tensor& x, double rate, bool training, Rng& rng);

ad::Tensor batch_norm(ad::Tape& tape, const ad::Tensor& x, BatchNormLayer& layer, bool training);

ad::Tensor embedding(ad::Tape& tape, std::span<const int> ids, EmbeddingLayer& layer);

ad::Tensor apply_activation(const ad::Tensor& x, Activation act);

ad::Tensor task_loss(const ad::Tensor& logits, std::span<const int> labels, LossKind kind);

}  // namespace procgcn
