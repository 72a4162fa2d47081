#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "procgcn/graphrep.hpp"
#include "procgcn/layers.hpp"
#include "procgcn/optim_spec.hpp"

namespace procgcn {

enum class ConvKind { gcnconv, graphconv };

/// one_level folds graph attributes into every node; the two_level variants
/// keep a separate dense path for them, optionally adding pseudo-embedding
/// node features or a learned activity embedding.
enum class Arch { one_level, two_level, two_level_pseudo, two_level_embed };

struct BatchNormSpec {
  double momentum = 0.1;
  double eps = 1e-5;
};

struct LayerSpec {
  int units = 64;
  Activation activation = Activation::relu;
  bool skip = false;
  std::optional<BatchNormSpec> batch_norm;
  std::optional<double> dropout;
  std::optional<Aggr> aggr;  // graphconv stacks only
};

/// One fully-resolved sample of the tuning space for a given architecture.
struct HyperParams {
  ConvKind conv_kind = ConvKind::gcnconv;
  Arch arch = Arch::two_level;
  std::vector<LayerSpec> node_stack;           // conv on node features, depth 1-5
  std::vector<LayerSpec> pseudo_stack;         // conv on pseudo features (pseudo arch)
  std::vector<LayerSpec> embed_stack;          // conv on embedded activities (embed arch)
  std::vector<LayerSpec> concat_stack;         // conv after node-wise concat (pseudo/embed)
  Pooling pooling = Pooling::mean;
  std::vector<LayerSpec> graph_dense;          // dense path for graph attributes, depth 1-3
  std::vector<LayerSpec> concat_dense;         // dense head after concatenation, depth 1-3
  int embedding_dim = 0;                       // embed arch only, 10-50
  OptimizerSpec optimizer;
  SchedulerSpec scheduler;
  LossKind loss = LossKind::cross_entropy;
  int batch_size = 32;
  double l1 = 0.0;

  nlohmann::json to_json() const;
  static HyperParams from_json(const nlohmann::json& j);
};

struct Dims {
  std::size_t d_node = 0;
  std::size_t d_graph = 0;
  std::size_t d_pseudo = 0;
  std::size_t activity_block = 0;  // width of the activity one-hot block
  std::size_t activity_vocab = 0;  // joint vocabulary size (incl. unseen slot)

  nlohmann::json to_json() const;
  static Dims from_json(const nlohmann::json& j);
};

const char* to_string(Arch a);
const char* to_string(ConvKind k);
Arch arch_from_string(const std::string& s);          // accepts O/T/TP/TE aliases
ConvKind conv_kind_from_string(const std::string& s);

/// Zeroes masked feature positions so the -1 padding sentinel cannot reach
/// the first layer.
ad::Tensor apply_input_mask(ad::Tape& tape, const ad::Tensor& node_feats,
                            std::span<const std::uint8_t> mask);

class Model {
 public:
  Model() = default;

  const HyperParams& hp() const { return hp_; }
  const Dims& dims() const { return dims_; }
  int n_classes() const { return n_classes_; }

  /// Logits for a batch, shape n_graphs x n_classes.
  ad::Tensor forward(ad::Tape& tape, const Batch& batch, bool training, Rng& dropout_rng);

  /// All trainable parameters in a fixed construction order.
  std::vector<Param*> parameters();

  /// Parameter values plus batch-norm running statistics.
  struct State {
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> running;
  };
  State state() const;
  void load_state(const State& s);

  nlohmann::json params_to_json() const;
  void params_from_json(const nlohmann::json& j);

 private:
  friend Model build_model(const HyperParams&, const Dims&, int, std::uint64_t);

  struct ConvBlock {
    ConvKind kind = ConvKind::gcnconv;
    GcnConvLayer gcn;
    GraphConvLayer graph;
    std::optional<BatchNormLayer> bn;
    std::optional<double> dropout;
    Activation act = Activation::relu;
    std::optional<DenseLayer> skip_proj;  // present iff skip with d_in != d_out
    bool skip = false;
  };
  struct DenseBlock {
    DenseLayer dense;
    std::optional<BatchNormLayer> bn;
    std::optional<double> dropout;
    Activation act = Activation::relu;
    std::optional<DenseLayer> skip_proj;
    bool skip = false;
  };

  ad::Tensor run_conv_stack(ad::Tape& tape, std::vector<ConvBlock>& stack, ad::Tensor x,
                            const Batch& batch, bool training, Rng& rng);
  ad::Tensor run_dense_stack(ad::Tape& tape, std::vector<DenseBlock>& stack, ad::Tensor x,
                             bool training, Rng& rng);

  HyperParams hp_;
  Dims dims_;
  int n_classes_ = 0;
  std::vector<ConvBlock> node_stack_, pseudo_stack_, embed_stack_, concat_stack_;
  std::vector<DenseBlock> graph_dense_, concat_dense_;
  std::optional<EmbeddingLayer> embedding_;
  DenseLayer classifier_;
};

/// Glorot-uniform initialization from a generator seeded by `seed`; identical
/// seeds give identical parameters.
Model build_model(const HyperParams& hp, const Dims& dims, int n_classes, std::uint64_t seed);

// Portable JSON checkpoint: hyperparameters, dimensions, class names, named
// parameter arrays, and references to the encoder/binning artifacts.
void save_checkpoint(const std::string& path, Model& model,
                     const std::vector<std::string>& class_names,
                     const std::string& encoder_ref, const std::string& binning_ref);

struct LoadedCheckpoint {
  Model model;
  std::vector<std::string> class_names;
  std::string encoder_ref;
  std::string binning_ref;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace procgcn
