#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ruinscope/autograd.hpp"
#include "ruinscope/checkpoint.hpp"
#include "ruinscope/graph.hpp"

namespace ruinscope::models {

enum class HeadKind { Sage, Mlp };
enum class Aggregation { UnweightedMean, WeightedMean };

std::string_view head_name(HeadKind kind);
HeadKind parse_head(std::string_view name);
std::string_view aggregation_name(Aggregation agg);
Aggregation parse_aggregation(std::string_view name);

/// Conv blocks (3x3 conv, ReLU, 2x2 max pool) after an average-pool stem,
/// then global average pooling and a dense projection to `feature_dim`.
struct EncoderConfig {
  std::vector<std::size_t> widths{16, 32, 64};
  std::size_t kernel = 3;
  std::size_t stem_pool = 4;
  std::size_t feature_dim = 64;
  std::size_t in_channels = 3;
};

struct HeadConfig {
  HeadKind kind = HeadKind::Sage;
  std::size_t layers = 2;
  std::size_t hidden = 32;
  double dropout = 0.5;
  std::size_t classes = 3;
  Aggregation aggregation = Aggregation::UnweightedMean;
};

struct ModelConfig {
  EncoderConfig encoder;
  HeadConfig head;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

template <typename T>
struct NamedParam {
  std::string name;
  nn::Var<T> var;
};

/// Siamese encoder plus a SAGE or fully-connected classification head.
///
/// Initialization streams are split so that, for equal seeds, a SAGE model
/// and an MLP model share encoder weights and the W_self path of the head.
template <typename T>
class DamageModel {
 public:
  DamageModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  HeadKind head_kind() const { return config_.head.kind; }
  std::size_t feature_dim() const { return config_.encoder.feature_dim; }

  /// Shared-weight encoder on one stream: [N,3,H,W] -> [N,F].
  nn::Var<T> encode_stream(const nn::Var<T>& images) const;

  /// enc(pre) - enc(post) for [B,6,H,W] features; [B,F] features are
  /// taken as precomputed embeddings.
  nn::Var<T> encode(const graph::GraphBatch& batch) const;

  /// One SAGE layer: h W_self + agg(h) W_neigh + b, with optional ReLU.
  nn::Var<T> sage_layer(const nn::Var<T>& h, const graph::GraphBatch& batch, std::size_t layer,
                        bool activate) const;

  nn::Var<T> head_logits(const nn::Var<T>& embeddings, const graph::GraphBatch& batch, bool train,
                         std::uint64_t dropout_seed) const;

  nn::Var<T> logits(const graph::GraphBatch& batch, bool train, std::uint64_t dropout_seed) const;

  /// Class probabilities [B,K].
  nn::Tensor<T> forward(const graph::GraphBatch& batch, bool train = false, std::uint64_t dropout_seed = 0) const;

  std::vector<NamedParam<T>> parameters() const;
  std::vector<NamedParam<T>> encoder_parameters() const;
  std::vector<NamedParam<T>> head_parameters() const;
  std::size_t parameter_count(bool head_only = false) const;

  /// Sets every neighbor weight of the SAGE head to zero.
  void zero_neighbor_weights();

  /// Encodes a crop-backed graph in chunks and attaches the embeddings.
  void embed_graph(graph::ChipGraph& graph, std::size_t chunk = 64) const;

  nn::Checkpoint to_checkpoint() const;
  static DamageModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  struct Dense {
    nn::Var<T> weight;
    nn::Var<T> bias;
  };
  struct HeadLayer {
    nn::Var<T> self_weight;
    nn::Var<T> neigh_weight;  // SAGE only
    nn::Var<T> bias;
  };

  ModelConfig config_;
  std::vector<Dense> convs_;
  Dense projection_;
  std::vector<HeadLayer> head_;
};

extern template class DamageModel<float>;
extern template class DamageModel<double>;

}  // namespace ruinscope::models
