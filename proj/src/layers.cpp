#include "procgcn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace procgcn {

ad::Tensor gcn_conv(ad::Tape& tape, const ad::Tensor& x, std::span<const int> src,
                    std::span<const int> dst, std::span<const double> edge_weights,
                    GcnConvLayer& layer) {
  const std::size_t n = x.rows();
  for (double w : edge_weights)
    if (w < 0.0 || w > 1.0) throw Error("gcn_conv expects edge weights scaled to [0, 1]");

  std::vector<double> deg(n, 1.0);  // self-loop of weight 1 at every node
  for (std::size_t k = 0; k < dst.size(); ++k)
    deg[static_cast<std::size_t>(dst[k])] += edge_weights[k];

  std::vector<double> edge_coeff(src.size());
  for (std::size_t k = 0; k < src.size(); ++k)
    edge_coeff[k] = edge_weights[k] / std::sqrt(deg[static_cast<std::size_t>(src[k])] *
                                                deg[static_cast<std::size_t>(dst[k])]);
  std::vector<double> self_coeff(n);
  for (std::size_t v = 0; v < n; ++v) self_coeff[v] = 1.0 / deg[v];

  ad::Tensor h = ad::edge_propagate(x, src, dst, edge_coeff, self_coeff);
  return ad::add(ad::matmul(h, tape.use(layer.weight)), tape.use(layer.bias));
}

ad::Tensor graph_conv(ad::Tape& tape, const ad::Tensor& x, std::span<const int> src,
                      std::span<const int> dst, std::span<const double> edge_weights,
                      GraphConvLayer& layer) {
  for (double w : edge_weights)
    if (w < 0.0 || w > 1.0) throw Error("graph_conv expects edge weights scaled to [0, 1]");

  ad::Reduce mode = layer.aggr == Aggr::add    ? ad::Reduce::sum
                    : layer.aggr == Aggr::mean ? ad::Reduce::mean
                                               : ad::Reduce::max;
  ad::Tensor agg = ad::edge_aggregate(x, src, dst, edge_weights, mode);
  ad::Tensor self = ad::matmul(x, tape.use(layer.weight_self));
  ad::Tensor neigh = ad::matmul(agg, tape.use(layer.weight_neigh));
  return ad::add(ad::add(self, neigh), tape.use(layer.bias));
}

ad::Tensor pool(ad::Tape&, const ad::Tensor& node_feats, std::span<const int> graph_id,
                std::size_t n_graphs, Pooling method) {
  ad::Reduce mode = method == Pooling::add    ? ad::Reduce::sum
                    : method == Pooling::mean ? ad::Reduce::mean
                                              : ad::Reduce::max;
  return ad::segment_reduce(node_feats, graph_id, n_graphs, mode);
}

ad::Tensor dense(ad::Tape& tape, const ad::Tensor& x, DenseLayer& layer) {
  ad::Tensor out = ad::matmul(x, tape.use(layer.weight));
  if (layer.has_bias) out = ad::add(out, tape.use(layer.bias));
  return out;
}

ad::Tensor dropout(ad::Tape& tape, const ad::Tensor& x, double rate, bool training, Rng& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw Error("dropout rate must be below 1");
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.next_double() < keep ? 1.0 / keep : 0.0;
  return ad::mul(x, tape.constant(x.rows(), x.cols(), mask));
}

ad::Tensor batch_norm(ad::Tape& tape, const ad::Tensor& x, BatchNormLayer& layer, bool training) {
  const std::size_t d = x.cols();
  if (layer.running_mean.size() != d || layer.running_var.size() != d)
    throw Error("batch_norm: feature width does not match layer state");

  ad::Tensor xhat;
  if (training) {
    std::vector<int> ids(x.rows(), 0);
    ad::Tensor mu = ad::segment_reduce(x, ids, 1, ad::Reduce::mean);
    ad::Tensor centered = ad::sub(x, mu);
    ad::Tensor var = ad::segment_reduce(ad::mul(centered, centered), ids, 1, ad::Reduce::mean);
    xhat = ad::div(centered, ad::sqrt_op(ad::add_scalar(var, layer.eps)));

    auto mv = mu.value();
    auto vv = var.value();
    for (std::size_t j = 0; j < d; ++j) {
      layer.running_mean[j] = (1.0 - layer.momentum) * layer.running_mean[j] + layer.momentum * mv[j];
      layer.running_var[j] = (1.0 - layer.momentum) * layer.running_var[j] + layer.momentum * vv[j];
    }
  } else {
    std::vector<double> denom(d);
    for (std::size_t j = 0; j < d; ++j) denom[j] = std::sqrt(layer.running_var[j] + layer.eps);
    ad::Tensor centered = ad::sub(x, tape.constant(1, d, layer.running_mean));
    xhat = ad::div(centered, tape.constant(1, d, denom));
  }
  return ad::add(ad::mul(xhat, tape.use(layer.gamma)), tape.use(layer.beta));
}

ad::Tensor embedding(ad::Tape& tape, std::span<const int> ids, EmbeddingLayer& layer) {
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= layer.table.rows)
      throw Error("embedding id out of vocabulary");
  return ad::row_gather(tape.use(layer.table), ids);
}

ad::Tensor apply_activation(const ad::Tensor& x, Activation act) {
  switch (act) {
    case Activation::relu: return ad::relu(x);
    case Activation::leaky_relu: return ad::leaky_relu(x);
    case Activation::elu: return ad::elu(x);
    case Activation::tanh: return ad::tanh_act(x);
    case Activation::softplus: return ad::softplus(x);
    case Activation::gelu: return ad::gelu(x);
  }
  throw Error("unknown activation");
}

ad::Tensor task_loss(const ad::Tensor& logits, std::span<const int> labels, LossKind kind) {
  return kind == LossKind::cross_entropy ? ad::cross_entropy(logits, labels)
                                         : ad::multi_margin(logits, labels);
}

}  // namespace procgcn
