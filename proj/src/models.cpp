#include "procgcn/models.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace procgcn {

// --- enum names ---------------------------------------------------------------

const char* to_string(Arch a) {
  switch (a) {
    case Arch::one_level: return "one_level";
    case Arch::two_level: return "two_level";
    case Arch::two_level_pseudo: return "two_level_pseudo";
    case Arch::two_level_embed: return "two_level_embed";
  }
  return "?";
}

const char* to_string(ConvKind k) {
  return k == ConvKind::gcnconv ? "gcnconv" : "graphconv";
}

Arch arch_from_string(const std::string& s) {
  if (s == "one_level" || s == "O") return Arch::one_level;
  if (s == "two_level" || s == "T") return Arch::two_level;
  if (s == "two_level_pseudo" || s == "TP") return Arch::two_level_pseudo;
  if (s == "two_level_embed" || s == "TE") return Arch::two_level_embed;
  throw ConfigError("unknown architecture: " + s);
}

ConvKind conv_kind_from_string(const std::string& s) {
  if (s == "gcnconv") return ConvKind::gcnconv;
  if (s == "graphconv") return ConvKind::graphconv;
  throw ConfigError("unknown convolution kind: " + s);
}

namespace {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::gelu: return "gelu";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "elu") return Activation::elu;
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  if (s == "gelu") return Activation::gelu;
  throw ConfigError("unknown activation: " + s);
}

const char* to_string(Aggr a) {
  switch (a) {
    case Aggr::add: return "add";
    case Aggr::mean: return "mean";
    case Aggr::max: return "max";
  }
  return "?";
}

Aggr aggr_from_string(const std::string& s) {
  if (s == "add") return Aggr::add;
  if (s == "mean") return Aggr::mean;
  if (s == "max") return Aggr::max;
  throw ConfigError("unknown aggregation: " + s);
}

const char* to_string(Pooling p) {
  switch (p) {
    case Pooling::mean: return "mean";
    case Pooling::add: return "add";
    case Pooling::max: return "max";
  }
  return "?";
}

Pooling pooling_from_string(const std::string& s) {
  if (s == "mean") return Pooling::mean;
  if (s == "add") return Pooling::add;
  if (s == "max") return Pooling::max;
  throw ConfigError("unknown pooling: " + s);
}

nlohmann::json layer_spec_to_json(const LayerSpec& l) {
  nlohmann::json j;
  j["units"] = l.units;
  j["activation"] = to_string(l.activation);
  j["skip"] = l.skip;
  if (l.batch_norm)
    j["batch_norm"] = {{"momentum", l.batch_norm->momentum}, {"eps", l.batch_norm->eps}};
  if (l.dropout) j["dropout"] = *l.dropout;
  if (l.aggr) j["aggr"] = to_string(*l.aggr);
  return j;
}

LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  LayerSpec l;
  l.units = j.at("units").get<int>();
  l.activation = activation_from_string(j.at("activation").get<std::string>());
  l.skip = j.value("skip", false);
  if (j.contains("batch_norm"))
    l.batch_norm = BatchNormSpec{j["batch_norm"].at("momentum").get<double>(),
                                 j["batch_norm"].at("eps").get<double>()};
  if (j.contains("dropout")) l.dropout = j["dropout"].get<double>();
  if (j.contains("aggr")) l.aggr = aggr_from_string(j["aggr"].get<std::string>());
  return l;
}

nlohmann::json stack_to_json(const std::vector<LayerSpec>& stack) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : stack) arr.push_back(layer_spec_to_json(l));
  return arr;
}

std::vector<LayerSpec> stack_from_json(const nlohmann::json& j) {
  std::vector<LayerSpec> stack;
  for (const auto& e : j) stack.push_back(layer_spec_from_json(e));
  return stack;
}

}  // namespace

nlohmann::json HyperParams::to_json() const {
  nlohmann::json j;
  j["conv_kind"] = procgcn::to_string(conv_kind);
  j["arch"] = procgcn::to_string(arch);
  j["node_stack"] = stack_to_json(node_stack);
  if (!pseudo_stack.empty()) j["pseudo_stack"] = stack_to_json(pseudo_stack);
  if (!embed_stack.empty()) j["embed_stack"] = stack_to_json(embed_stack);
  if (!concat_stack.empty()) j["concat_stack"] = stack_to_json(concat_stack);
  j["pooling"] = to_string(pooling);
  if (!graph_dense.empty()) j["graph_dense"] = stack_to_json(graph_dense);
  j["concat_dense"] = stack_to_json(concat_dense);
  if (embedding_dim > 0) j["embedding_dim"] = embedding_dim;
  j["optimizer"] = optimizer.to_json();
  j["scheduler"] = scheduler.to_json();
  j["loss"] = loss == LossKind::cross_entropy ? "cross_entropy" : "multi_margin";
  j["batch_size"] = batch_size;
  j["l1"] = l1;
  return j;
}

HyperParams HyperParams::from_json(const nlohmann::json& j) {
  HyperParams hp;
  hp.conv_kind = conv_kind_from_string(j.at("conv_kind").get<std::string>());
  hp.arch = arch_from_string(j.at("arch").get<std::string>());
  hp.node_stack = stack_from_json(j.at("node_stack"));
  if (j.contains("pseudo_stack")) hp.pseudo_stack = stack_from_json(j["pseudo_stack"]);
  if (j.contains("embed_stack")) hp.embed_stack = stack_from_json(j["embed_stack"]);
  if (j.contains("concat_stack")) hp.concat_stack = stack_from_json(j["concat_stack"]);
  hp.pooling = pooling_from_string(j.at("pooling").get<std::string>());
  if (j.contains("graph_dense")) hp.graph_dense = stack_from_json(j["graph_dense"]);
  hp.concat_dense = stack_from_json(j.at("concat_dense"));
  hp.embedding_dim = j.value("embedding_dim", 0);
  hp.optimizer = OptimizerSpec::from_json(j.at("optimizer"));
  hp.scheduler = SchedulerSpec::from_json(j.at("scheduler"));
  hp.loss = j.at("loss").get<std::string>() == "multi_margin" ? LossKind::multi_margin
                                                              : LossKind::cross_entropy;
  hp.batch_size = j.at("batch_size").get<int>();
  hp.l1 = j.at("l1").get<double>();
  return hp;
}

nlohmann::json Dims::to_json() const {
  return {{"d_node", d_node},
          {"d_graph", d_graph},
          {"d_pseudo", d_pseudo},
          {"activity_block", activity_block},
          {"activity_vocab", activity_vocab}};
}

Dims Dims::from_json(const nlohmann::json& j) {
  Dims d;
  d.d_node = j.at("d_node").get<std::size_t>();
  d.d_graph = j.at("d_graph").get<std::size_t>();
  d.d_pseudo = j.at("d_pseudo").get<std::size_t>();
  d.activity_block = j.at("activity_block").get<std::size_t>();
  d.activity_vocab = j.at("activity_vocab").get<std::size_t>();
  return d;
}

// --- construction ---------------------------------------------------------------

ad::Tensor apply_input_mask(ad::Tape& tape, const ad::Tensor& node_feats,
                            std::span<const std::uint8_t> mask) {
  if (mask.size() != node_feats.size()) throw Error("mask shape does not match features");
  std::vector<double> m01(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) m01[i] = mask[i] ? 1.0 : 0.0;
  return ad::mul(node_feats, tape.constant(node_feats.rows(), node_feats.cols(), m01));
}

namespace {

void glorot(Param& p, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const std::size_t fans = fan_in + fan_out;
  const double limit = std::sqrt(6.0 / static_cast<double>(fans == 0 ? 1 : fans));
  for (double& v : p.value) v = rng.uniform(-limit, limit);
}

DenseLayer make_dense(const std::string& name, std::size_t d_in, std::size_t d_out, Rng& rng,
                      bool with_bias = true) {
  DenseLayer l;
  l.weight = Param::matrix(name + ".weight", d_in, d_out, ParamKind::weight);
  glorot(l.weight, d_in, d_out, rng);
  l.bias = Param::matrix(name + ".bias", 1, with_bias ? d_out : 0, ParamKind::bias);
  l.has_bias = with_bias;
  return l;
}

BatchNormLayer make_bn(const std::string& name, std::size_t d, const BatchNormSpec& spec) {
  BatchNormLayer bn;
  bn.gamma = Param::matrix(name + ".gamma", 1, d, ParamKind::bn_scale);
  std::fill(bn.gamma.value.begin(), bn.gamma.value.end(), 1.0);
  bn.beta = Param::matrix(name + ".beta", 1, d, ParamKind::bn_shift);
  bn.running_mean.assign(d, 0.0);
  bn.running_var.assign(d, 1.0);
  bn.momentum = spec.momentum;
  bn.eps = spec.eps;
  return bn;
}

}  // namespace

Model build_model(const HyperParams& hp, const Dims& dims, int n_classes, std::uint64_t seed) {
  auto check_depth = [](const std::vector<LayerSpec>& s, std::size_t lo, std::size_t hi,
                        const char* what) {
    if (s.size() < lo || s.size() > hi)
      throw ConfigError(std::string(what) + " stack depth out of range");
  };
  check_depth(hp.node_stack, 1, 5, "node conv");
  check_depth(hp.concat_dense, 1, 3, "final dense");
  const bool pseudo = hp.arch == Arch::two_level_pseudo;
  const bool embed = hp.arch == Arch::two_level_embed;
  if (hp.arch == Arch::one_level) {
    if (!hp.graph_dense.empty())
      throw ConfigError("one_level takes no separate graph dense path");
  } else {
    check_depth(hp.graph_dense, 1, 3, "graph dense");
  }
  if (pseudo) {
    check_depth(hp.pseudo_stack, 1, 5, "pseudo conv");
    if (dims.d_pseudo == 0) throw ConfigError("pseudo architecture needs pseudo feature dims");
  } else if (!hp.pseudo_stack.empty()) {
    throw ConfigError("pseudo stack given for a non-pseudo architecture");
  }
  if (embed) {
    check_depth(hp.embed_stack, 1, 5, "embedding conv");
    if (hp.embedding_dim <= 0) throw ConfigError("embed architecture needs an embedding dim");
    if (dims.activity_vocab == 0)
      throw ConfigError("embed architecture needs the activity vocabulary size");
  } else if (!hp.embed_stack.empty() || hp.embedding_dim > 0) {
    throw ConfigError("embedding settings given for a non-embed architecture");
  }
  if (pseudo || embed)
    check_depth(hp.concat_stack, 1, 5, "concat conv");
  else if (!hp.concat_stack.empty())
    throw ConfigError("concat conv stack given for a two-input architecture");

  Model m;
  m.hp_ = hp;
  m.dims_ = dims;
  m.n_classes_ = n_classes;
  Rng rng(seed, "model_init");

  auto conv_stack = [&](const std::vector<LayerSpec>& specs, std::size_t d_in,
                        const std::string& prefix) {
    std::vector<Model::ConvBlock> stack;
    std::size_t d = d_in;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& spec = specs[i];
      const auto d_out = static_cast<std::size_t>(spec.units);
      const std::string name = prefix + "." + std::to_string(i);
      Model::ConvBlock b;
      b.kind = hp.conv_kind;
      if (hp.conv_kind == ConvKind::gcnconv) {
        b.gcn.weight = Param::matrix(name + ".weight", d, d_out, ParamKind::weight);
        glorot(b.gcn.weight, d, d_out, rng);
        b.gcn.bias = Param::matrix(name + ".bias", 1, d_out, ParamKind::bias);
      } else {
        b.graph.weight_self = Param::matrix(name + ".weight_self", d, d_out, ParamKind::weight);
        glorot(b.graph.weight_self, d, d_out, rng);
        b.graph.weight_neigh = Param::matrix(name + ".weight_neigh", d, d_out, ParamKind::weight);
        glorot(b.graph.weight_neigh, d, d_out, rng);
        b.graph.bias = Param::matrix(name + ".bias", 1, d_out, ParamKind::bias);
        b.graph.aggr = spec.aggr.value_or(Aggr::add);
      }
      if (spec.batch_norm) b.bn = make_bn(name + ".bn", d_out, *spec.batch_norm);
      b.dropout = spec.dropout;
      b.act = spec.activation;
      b.skip = spec.skip;
      if (spec.skip && d != d_out)
        b.skip_proj = make_dense(name + ".skip", d, d_out, rng, /*with_bias=*/false);
      stack.push_back(std::move(b));
      d = d_out;
    }
    return stack;
  };

  auto dense_stack = [&](const std::vector<LayerSpec>& specs, std::size_t d_in,
                         const std::string& prefix) {
    std::vector<Model::DenseBlock> stack;
    std::size_t d = d_in;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& spec = specs[i];
      const auto d_out = static_cast<std::size_t>(spec.units);
      const std::string name = prefix + "." + std::to_string(i);
      Model::DenseBlock b;
      b.dense = make_dense(name, d, d_out, rng);
      if (spec.batch_norm) b.bn = make_bn(name + ".bn", d_out, *spec.batch_norm);
      b.dropout = spec.dropout;
      b.act = spec.activation;
      b.skip = spec.skip;
      if (spec.skip && d != d_out)
        b.skip_proj = make_dense(name + ".skip", d, d_out, rng, /*with_bias=*/false);
      stack.push_back(std::move(b));
      d = d_out;
    }
    return stack;
  };

  std::size_t pooled_dim = 0;
  switch (hp.arch) {
    case Arch::one_level: {
      m.node_stack_ = conv_stack(hp.node_stack, dims.d_node + dims.d_graph, "node");
      pooled_dim = static_cast<std::size_t>(hp.node_stack.back().units);
      break;
    }
    case Arch::two_level: {
      m.node_stack_ = conv_stack(hp.node_stack, dims.d_node, "node");
      pooled_dim = static_cast<std::size_t>(hp.node_stack.back().units);
      break;
    }
    case Arch::two_level_pseudo: {
      m.node_stack_ = conv_stack(hp.node_stack, dims.d_node, "node");
      m.pseudo_stack_ = conv_stack(hp.pseudo_stack, dims.d_pseudo, "pseudo");
      const std::size_t zeta = static_cast<std::size_t>(hp.node_stack.back().units) +
                               static_cast<std::size_t>(hp.pseudo_stack.back().units);
      m.concat_stack_ = conv_stack(hp.concat_stack, zeta, "concat");
      pooled_dim = static_cast<std::size_t>(hp.concat_stack.back().units);
      break;
    }
    case Arch::two_level_embed: {
      m.embedding_ = EmbeddingLayer{Param::matrix(
          "embedding.table", dims.activity_vocab, static_cast<std::size_t>(hp.embedding_dim),
          ParamKind::weight)};
      glorot(m.embedding_->table, dims.activity_vocab,
             static_cast<std::size_t>(hp.embedding_dim), rng);
      m.embed_stack_ =
          conv_stack(hp.embed_stack, static_cast<std::size_t>(hp.embedding_dim), "embed");
      // the activity one-hot block is carried by the embedding instead
      m.node_stack_ = conv_stack(hp.node_stack, dims.d_node - dims.activity_block, "node");
      const std::size_t zeta = static_cast<std::size_t>(hp.embed_stack.back().units) +
                               static_cast<std::size_t>(hp.node_stack.back().units);
      m.concat_stack_ = conv_stack(hp.concat_stack, zeta, "concat");
      pooled_dim = static_cast<std::size_t>(hp.concat_stack.back().units);
      break;
    }
  }

  std::size_t head_in = pooled_dim;
  if (hp.arch != Arch::one_level) {
    m.graph_dense_ = dense_stack(hp.graph_dense, dims.d_graph, "graph");
    head_in += static_cast<std::size_t>(hp.graph_dense.back().units);
  }
  m.concat_dense_ = dense_stack(hp.concat_dense, head_in, "head");
  m.classifier_ = make_dense("classifier",
                             static_cast<std::size_t>(hp.concat_dense.back().units),
                             static_cast<std::size_t>(n_classes), rng);
  return m;
}

// --- forward ---------------------------------------------------------------------

ad::Tensor Model::run_conv_stack(ad::Tape& tape, std::vector<ConvBlock>& stack, ad::Tensor x,
                                 const Batch& batch, bool training, Rng& rng) {
  for (auto& b : stack) {
    ad::Tensor in = x;
    ad::Tensor h = b.kind == ConvKind::gcnconv
                       ? gcn_conv(tape, in, batch.edge_src, batch.edge_dst, batch.edge_weights,
                                  b.gcn)
                       : graph_conv(tape, in, batch.edge_src, batch.edge_dst,
                                    batch.edge_weights, b.graph);
    if (b.bn) h = batch_norm(tape, h, *b.bn, training);
    h = apply_activation(h, b.act);
    if (b.dropout) h = dropout(tape, h, *b.dropout, training, rng);
    if (b.skip) h = ad::add(h, b.skip_proj ? dense(tape, in, *b.skip_proj) : in);
    x = h;
  }
  return x;
}

ad::Tensor Model::run_dense_stack(ad::Tape& tape, std::vector<DenseBlock>& stack, ad::Tensor x,
                                  bool training, Rng& rng) {
  for (auto& b : stack) {
    ad::Tensor in = x;
    ad::Tensor h = dense(tape, in, b.dense);
    if (b.bn) h = batch_norm(tape, h, *b.bn, training);
    h = apply_activation(h, b.act);
    if (b.dropout) h = dropout(tape, h, *b.dropout, training, rng);
    if (b.skip) h = ad::add(h, b.skip_proj ? dense(tape, in, *b.skip_proj) : in);
    x = h;
  }
  return x;
}

ad::Tensor Model::forward(ad::Tape& tape, const Batch& batch, bool training, Rng& rng) {
  if (batch.d != dims_.d_node) throw Error("batch node width does not match the model");

  ad::Tensor feats = tape.constant(batch.n_nodes, batch.d, batch.node_feats);
  ad::Tensor masked = apply_input_mask(tape, feats, batch.node_mask);
  ad::Tensor graph_vecs = tape.constant(batch.n_graphs, batch.d_graph, batch.graph_vecs);

  ad::Tensor pooled;
  switch (hp_.arch) {
    case Arch::one_level: {
      // graph vector repeated per node and concatenated onto the node features
      ad::Tensor expanded = ad::row_gather(graph_vecs, batch.graph_id);
      ad::Tensor h = run_conv_stack(tape, node_stack_, ad::concat_cols(masked, expanded), batch,
                                    training, rng);
      pooled = pool(tape, h, batch.graph_id, batch.n_graphs, hp_.pooling);
      break;
    }
    case Arch::two_level: {
      ad::Tensor h = run_conv_stack(tape, node_stack_, masked, batch, training, rng);
      pooled = pool(tape, h, batch.graph_id, batch.n_graphs, hp_.pooling);
      break;
    }
    case Arch::two_level_pseudo: {
      if (batch.d_pseudo != dims_.d_pseudo || batch.d_pseudo == 0)
        throw Error("batch carries no pseudo features for the pseudo architecture");
      ad::Tensor hn = run_conv_stack(tape, node_stack_, masked, batch, training, rng);
      ad::Tensor pseudo = tape.constant(batch.n_nodes, batch.d_pseudo, batch.pseudo_feats);
      ad::Tensor hp = run_conv_stack(tape, pseudo_stack_, pseudo, batch, training, rng);
      ad::Tensor hc =
          run_conv_stack(tape, concat_stack_, ad::concat_cols(hn, hp), batch, training, rng);
      pooled = pool(tape, hc, batch.graph_id, batch.n_graphs, hp_.pooling);
      break;
    }
    case Arch::two_level_embed: {
      ad::Tensor emb = embedding(tape, batch.activity_ids, *embedding_);
      ad::Tensor he = run_conv_stack(tape, embed_stack_, emb, batch, training, rng);
      ad::Tensor rest = ad::slice_cols(masked, dims_.activity_block, dims_.d_node);
      ad::Tensor hn = run_conv_stack(tape, node_stack_, rest, batch, training, rng);
      ad::Tensor hc =
          run_conv_stack(tape, concat_stack_, ad::concat_cols(he, hn), batch, training, rng);
      pooled = pool(tape, hc, batch.graph_id, batch.n_graphs, hp_.pooling);
      break;
    }
  }

  ad::Tensor head_in = pooled;
  if (hp_.arch != Arch::one_level) {
    ad::Tensor vg = run_dense_stack(tape, graph_dense_, graph_vecs, training, rng);
    head_in = ad::concat_cols(pooled, vg);
  }
  ad::Tensor head = run_dense_stack(tape, concat_dense_, head_in, training, rng);
  return dense(tape, head, classifier_);
}

// --- parameter access ---------------------------------------------------------

std::vector<Param*> Model::parameters() {
  std::vector<Param*> out;
  auto add_conv = [&](std::vector<ConvBlock>& stack) {
    for (auto& b : stack) {
      if (b.kind == ConvKind::gcnconv) {
        out.push_back(&b.gcn.weight);
        out.push_back(&b.gcn.bias);
      } else {
        out.push_back(&b.graph.weight_self);
        out.push_back(&b.graph.weight_neigh);
        out.push_back(&b.graph.bias);
      }
      if (b.bn) {
        out.push_back(&b.bn->gamma);
        out.push_back(&b.bn->beta);
      }
      if (b.skip_proj) out.push_back(&b.skip_proj->weight);
    }
  };
  auto add_dense = [&](std::vector<DenseBlock>& stack) {
    for (auto& b : stack) {
      out.push_back(&b.dense.weight);
      out.push_back(&b.dense.bias);
      if (b.bn) {
        out.push_back(&b.bn->gamma);
        out.push_back(&b.bn->beta);
      }
      if (b.skip_proj) out.push_back(&b.skip_proj->weight);
    }
  };
  add_conv(node_stack_);
  add_conv(pseudo_stack_);
  add_conv(embed_stack_);
  add_conv(concat_stack_);
  if (embedding_) out.push_back(&embedding_->table);
  add_dense(graph_dense_);
  add_dense(concat_dense_);
  out.push_back(&classifier_.weight);
  out.push_back(&classifier_.bias);
  return out;
}

Model::State Model::state() const {
  State s;
  auto* self = const_cast<Model*>(this);
  for (Param* p : self->parameters()) s.values.push_back(p->value);
  auto add_bn = [&](const auto& stack) {
    for (const auto& b : stack) {
      if (b.bn) {
        s.running.push_back(b.bn->running_mean);
        s.running.push_back(b.bn->running_var);
      }
    }
  };
  add_bn(node_stack_);
  add_bn(pseudo_stack_);
  add_bn(embed_stack_);
  add_bn(concat_stack_);
  add_bn(graph_dense_);
  add_bn(concat_dense_);
  return s;
}

void Model::load_state(const State& s) {
  auto params = parameters();
  if (params.size() != s.values.size()) throw Error("state does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.values[i];
  std::size_t k = 0;
  auto set_bn = [&](auto& stack) {
    for (auto& b : stack) {
      if (b.bn) {
        b.bn->running_mean = s.running.at(k++);
        b.bn->running_var = s.running.at(k++);
      }
    }
  };
  set_bn(node_stack_);
  set_bn(pseudo_stack_);
  set_bn(embed_stack_);
  set_bn(concat_stack_);
  set_bn(graph_dense_);
  set_bn(concat_dense_);
}

nlohmann::json Model::params_to_json() const {
  nlohmann::json j = nlohmann::json::object();
  auto* self = const_cast<Model*>(this);
  for (Param* p : self->parameters()) j[p->name] = p->value;
  auto add_bn = [&](const auto& stack) {
    for (const auto& b : stack) {
      if (b.bn) {
        j[b.bn->gamma.name + ".running_mean"] = b.bn->running_mean;
        j[b.bn->gamma.name + ".running_var"] = b.bn->running_var;
      }
    }
  };
  add_bn(node_stack_);
  add_bn(pseudo_stack_);
  add_bn(embed_stack_);
  add_bn(concat_stack_);
  add_bn(graph_dense_);
  add_bn(concat_dense_);
  return j;
}

void Model::params_from_json(const nlohmann::json& j) {
  for (Param* p : parameters()) {
    auto vals = j.at(p->name).get<std::vector<double>>();
    if (vals.size() != p->size()) throw Error("checkpoint parameter size mismatch: " + p->name);
    p->value = std::move(vals);
  }
  auto set_bn = [&](auto& stack) {
    for (auto& b : stack) {
      if (b.bn) {
        const nlohmann::json& rm = j.at(b.bn->gamma.name + ".running_mean");
        const nlohmann::json& rv = j.at(b.bn->gamma.name + ".running_var");
        b.bn->running_mean = rm.get<std::vector<double>>();
        b.bn->running_var = rv.get<std::vector<double>>();
      }
    }
  };
  set_bn(node_stack_);
  set_bn(pseudo_stack_);
  set_bn(embed_stack_);
  set_bn(concat_stack_);
  set_bn(graph_dense_);
  set_bn(concat_dense_);
}

// --- checkpoint io ---------------------------------------------------------------

void save_checkpoint(const std::string& path, Model& model,
                     const std::vector<std::string>& class_names,
                     const std::string& encoder_ref, const std::string& binning_ref) {
  nlohmann::json j;
  j["spec"] = model.hp().to_json();
  j["dims"] = model.dims().to_json();
  j["n_classes"] = model.n_classes();
  j["class_names"] = class_names;
  j["encoder_ref"] = encoder_ref;
  j["binning_ref"] = binning_ref;
  j["params"] = model.params_to_json();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << j.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  nlohmann::json j = nlohmann::json::parse(in);

  LoadedCheckpoint lc;
  HyperParams hp = HyperParams::from_json(j.at("spec"));
  Dims dims = Dims::from_json(j.at("dims"));
  const int n_classes = j.at("n_classes").get<int>();
  lc.model = build_model(hp, dims, n_classes, /*seed=*/0);
  lc.model.params_from_json(j.at("params"));
  lc.class_names = j.at("class_names").get<std::vector<std::string>>();
  lc.encoder_ref = j.at("encoder_ref").get<std::string>();
  lc.binning_ref = j.at("binning_ref").get<std::string>();
  return lc;
}

}  // namespace procgcn
