#include "ruinscope/models.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <type_traits>

#include "ruinscope/error.hpp"
#include "ruinscope/rng.hpp"

namespace ruinscope::models {
namespace {

template <typename T>
nn::Var<T> uniform_param(Rng& rng, nn::Shape shape, std::size_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  nn::Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return nn::Var<T>::parameter(std::move(t));
}

template <typename T>
nn::Var<T> zero_param(nn::Shape shape) {
  return nn::Var<T>::parameter(nn::Tensor<T>(std::move(shape)));
}

template <typename T>
nn::Var<T> to_var(const nn::Tensor<float>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return nn::Var<T>(t);
  } else {
    return nn::Var<T>(t.cast<T>());
  }
}

}  // namespace

std::string_view head_name(HeadKind kind) { return kind == HeadKind::Sage ? "sage" : "mlp"; }

HeadKind parse_head(std::string_view name) {
  if (name == "sage") return HeadKind::Sage;
  if (name == "mlp") return HeadKind::Mlp;
  throw Error(Errc::ConfigError, "unknown head '" + std::string(name) + "' (expected sage|mlp)");
}

std::string_view aggregation_name(Aggregation agg) {
  return agg == Aggregation::WeightedMean ? "weighted" : "unweighted";
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "weighted" || name == "weighted_mean") return Aggregation::WeightedMean;
  if (name == "unweighted" || name == "unweighted_mean") return Aggregation::UnweightedMean;
  throw Error(Errc::ConfigError, "unknown aggregation '" + std::string(name) + "'");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"encoder",
       {{"widths", c.encoder.widths},
        {"kernel", c.encoder.kernel},
        {"stem_pool", c.encoder.stem_pool},
        {"feature_dim", c.encoder.feature_dim},
        {"in_channels", c.encoder.in_channels}}},
      {"head",
       {{"kind", head_name(c.head.kind)},
        {"layers", c.head.layers},
        {"hidden", c.head.hidden},
        {"dropout", c.head.dropout},
        {"classes", c.head.classes},
        {"aggregation", aggregation_name(c.head.aggregation)}}},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      c.encoder.widths = e.value("widths", c.encoder.widths);
      c.encoder.kernel = e.value("kernel", c.encoder.kernel);
      c.encoder.stem_pool = e.value("stem_pool", c.encoder.stem_pool);
      c.encoder.feature_dim = e.value("feature_dim", c.encoder.feature_dim);
      c.encoder.in_channels = e.value("in_channels", c.encoder.in_channels);
    }
    if (j.contains("head")) {
      const auto& h = j.at("head");
      c.head.kind = parse_head(h.value("kind", std::string(head_name(c.head.kind))));
      c.head.layers = h.value("layers", c.head.layers);
      c.head.hidden = h.value("hidden", c.head.hidden);
      c.head.dropout = h.value("dropout", c.head.dropout);
      c.head.classes = h.value("classes", c.head.classes);
      c.head.aggregation =
          parse_aggregation(h.value("aggregation", std::string(aggregation_name(c.head.aggregation))));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  if (c.encoder.feature_dim == 0 || c.head.layers == 0 || c.head.hidden == 0 || c.head.classes < 2 ||
      c.encoder.widths.empty() || c.encoder.stem_pool == 0 || !(c.head.dropout >= 0.0 && c.head.dropout < 1.0)) {
    throw Error(Errc::ConfigError, "invalid model configuration");
  }
  return c;
}

template <typename T>
DamageModel<T>::DamageModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  const auto& enc = config_.encoder;
  Rng enc_rng(mix_seed(seed, 1));
  std::size_t in = enc.in_channels;
  for (std::size_t width : enc.widths) {
    const std::size_t fan_in = in * enc.kernel * enc.kernel;
    convs_.push_back({uniform_param<T>(enc_rng, {width, in, enc.kernel, enc.kernel}, fan_in), zero_param<T>({width})});
    in = width;
  }
  projection_ = {uniform_param<T>(enc_rng, {in, enc.feature_dim}, in), zero_param<T>({enc.feature_dim})};

  const auto& head = config_.head;
  Rng self_rng(mix_seed(seed, 2));
  Rng neigh_rng(mix_seed(seed, 3));
  std::size_t d = enc.feature_dim;
  for (std::size_t l = 0; l < head.layers; ++l) {
    const std::size_t out = l + 1 == head.layers ? head.classes : head.hidden;
    HeadLayer layer;
    layer.self_weight = uniform_param<T>(self_rng, {d, out}, d);
    layer.bias = zero_param<T>({out});
    if (head.kind == HeadKind::Sage) layer.neigh_weight = uniform_param<T>(neigh_rng, {d, out}, d);
    head_.push_back(std::move(layer));
    d = out;
  }
}

template <typename T>
nn::Var<T> DamageModel<T>::encode_stream(const nn::Var<T>& images) const {
  const auto& enc = config_.encoder;
  nn::Var<T> x = nn::avg_pool2d(images, enc.stem_pool);
  for (const auto& conv : convs_) {
    x = nn::conv2d(x, conv.weight, conv.bias, 1, enc.kernel / 2);
    x = nn::relu(x);
    x = nn::max_pool2d(x, 2);
  }
  x = nn::global_avg_pool(x);
  return nn::relu(nn::dense(x, projection_.weight, projection_.bias));
}

template <typename T>
nn::Var<T> DamageModel<T>::encode(const graph::GraphBatch& batch) const {
  const auto& shape = batch.features.shape();
  if (shape.size() == 2) {
    if (shape[1] != config_.encoder.feature_dim) {
      throw Error(Errc::ShapeMismatch, "embeddings " + nn::shape_str(shape) + " but model expects width " +
                                           std::to_string(config_.encoder.feature_dim));
    }
    return to_var<T>(batch.features);
  }
  const std::size_t c = config_.encoder.in_channels;
  if (shape.size() != 4 || shape[1] != 2 * c) {
    throw Error(Errc::ShapeMismatch, "batch features " + nn::shape_str(shape) + " are not [B," +
                                         std::to_string(2 * c) + ",H,W]");
  }
  const nn::Var<T> both = to_var<T>(batch.features);
  const nn::Var<T> pre = encode_stream(nn::narrow(both, 1, 0, c));
  const nn::Var<T> post = encode_stream(nn::narrow(both, 1, c, c));
  return nn::subtract(pre, post);
}

template <typename T>
nn::Var<T> DamageModel<T>::sage_layer(const nn::Var<T>& h, const graph::GraphBatch& batch, std::size_t layer,
                                      bool activate) const {
  const HeadLayer& p = head_.at(layer);
  nn::Var<T> out = nn::matmul(h, p.self_weight);
  if (config_.head.kind == HeadKind::Sage) {
    std::vector<std::size_t> group(batch.neighbor_index.size());
    for (std::size_t v = 0; v < batch.size(); ++v) {
      for (std::size_t k = batch.neighbor_offsets[v]; k < batch.neighbor_offsets[v + 1]; ++k) group[k] = v;
    }
    const nn::Var<T> messages = nn::gather_rows(h, std::span<const std::size_t>(batch.neighbor_index));
    nn::Var<T> agg;
    if (config_.head.aggregation == Aggregation::WeightedMean) {
      std::vector<T> w(batch.neighbor_weight.begin(), batch.neighbor_weight.end());
      agg = nn::scatter_mean(messages, std::span<const std::size_t>(group), batch.size(),
                             std::optional<std::span<const T>>(std::span<const T>(w)));
    } else {
      agg = nn::scatter_mean(messages, std::span<const std::size_t>(group), batch.size());
    }
    out = nn::add(out, nn::matmul(agg, p.neigh_weight));
  }
  out = nn::add_bias(out, p.bias);
  return activate ? nn::relu(out) : out;
}

template <typename T>
nn::Var<T> DamageModel<T>::head_logits(const nn::Var<T>& embeddings, const graph::GraphBatch& batch, bool train,
                                       std::uint64_t dropout_seed) const {
  nn::Var<T> h = embeddings;
  for (std::size_t l = 0; l < head_.size(); ++l) {
    const bool last = l + 1 == head_.size();
    h = sage_layer(h, batch, l, !last);
    if (l == 0 && !last) h = nn::dropout(h, config_.head.dropout, train, dropout_seed);
  }
  return h;
}

template <typename T>
nn::Var<T> DamageModel<T>::logits(const graph::GraphBatch& batch, bool train, std::uint64_t dropout_seed) const {
  return head_logits(encode(batch), batch, train, dropout_seed);
}

template <typename T>
nn::Tensor<T> DamageModel<T>::forward(const graph::GraphBatch& batch, bool train, std::uint64_t dropout_seed) const {
  return nn::softmax(logits(batch, train, dropout_seed)).value();
}

template <typename T>
std::vector<NamedParam<T>> DamageModel<T>::encoder_parameters() const {
  std::vector<NamedParam<T>> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.push_back({"encoder.conv" + std::to_string(i) + ".weight", convs_[i].weight});
    out.push_back({"encoder.conv" + std::to_string(i) + ".bias", convs_[i].bias});
  }
  out.push_back({"encoder.proj.weight", projection_.weight});
  out.push_back({"encoder.proj.bias", projection_.bias});
  return out;
}

template <typename T>
std::vector<NamedParam<T>> DamageModel<T>::head_parameters() const {
  std::vector<NamedParam<T>> out;
  for (std::size_t l = 0; l < head_.size(); ++l) {
    const std::string prefix = "head.layer" + std::to_string(l);
    out.push_back({prefix + ".self.weight", head_[l].self_weight});
    if (head_[l].neigh_weight.defined()) out.push_back({prefix + ".neigh.weight", head_[l].neigh_weight});
    out.push_back({prefix + ".bias", head_[l].bias});
  }
  return out;
}

template <typename T>
std::vector<NamedParam<T>> DamageModel<T>::parameters() const {
  auto out = encoder_parameters();
  for (auto& p : head_parameters()) out.push_back(std::move(p));
  return out;
}

template <typename T>
std::size_t DamageModel<T>::parameter_count(bool head_only) const {
  std::size_t n = 0;
  for (const auto& p : head_only ? head_parameters() : parameters()) n += p.var.value().size();
  return n;
}

template <typename T>
void DamageModel<T>::zero_neighbor_weights() {
  for (auto& layer : head_) {
    if (layer.neigh_weight.defined()) {
      for (auto& v : layer.neigh_weight.mutable_value().data()) v = T(0);
    }
  }
}

template <typename T>
void DamageModel<T>::embed_graph(graph::ChipGraph& g, std::size_t chunk) const {
  if (g.has_embeddings()) return;
  const std::size_t f = feature_dim();
  nn::Tensor<float> emb({g.size(), f});
  for (std::size_t start = 0; start < g.size(); start += chunk) {
    const std::size_t end = std::min(g.size(), start + chunk);
    graph::ChipGraph part;
    part.nodes.assign(g.nodes.begin() + static_cast<long>(start), g.nodes.begin() + static_cast<long>(end));
    part.adjacency.assign(part.nodes.size(), {});
    const graph::ChipGraph* members[] = {&part};
    const nn::Var<T> e = encode(graph::assemble_batch(members));
    for (std::size_t i = 0; i < e.value().size(); ++i) emb[start * f + i] = static_cast<float>(e.value()[i]);
  }
  graph::attach_embeddings(g, std::move(emb));
}

template <typename T>
nn::Checkpoint DamageModel<T>::to_checkpoint() const {
  nn::Checkpoint ckpt;
  ckpt.metadata_json = nlohmann::json{{"format", "ruinscope-model"}, {"model", to_json(config_)}}.dump();
  for (const auto& p : parameters()) {
    ckpt.params.push_back({p.name, p.var.value().template cast<float>()});
  }
  return ckpt;
}

template <typename T>
DamageModel<T> DamageModel<T>::from_checkpoint(const nn::Checkpoint& ckpt) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.metadata_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("checkpoint metadata: ") + e.what());
  }
  if (meta.value("format", "") != "ruinscope-model") throw Error(Errc::ParseError, "not a model checkpoint");
  DamageModel model(model_config_from_json(meta.at("model")), 0);
  auto params = model.parameters();
  if (params.size() != ckpt.params.size()) {
    throw Error(Errc::ParseError, "checkpoint has " + std::to_string(ckpt.params.size()) + " tensors, model needs " +
                                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.params[i];
    auto& dst = params[i].var.mutable_value();
    if (src.name != params[i].name || src.value.shape() != dst.shape()) {
      throw Error(Errc::ParseError, "checkpoint tensor '" + src.name + "' does not match '" + params[i].name + "'");
    }
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(src.value[k]);
  }
  return model;
}

template class DamageModel<float>;
template class DamageModel<double>;

}  // namespace ruinscope::models
