#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ruinscope/ingest.hpp"
#include "ruinscope/tensor.hpp"

namespace ruinscope::graph {

struct WeightedEdge {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  double weight = 1.0;

  friend bool operator==(const WeightedEdge&, const WeightedEdge&) = default;
};

/// One chip's building graph. Nodes carry either their 3x128x128 crop pair
/// or, once encoded, a row of `embeddings` ([n, F]).
struct ChipGraph {
  std::string chip_id;
  std::string disaster_id;
  std::string disaster_type;
  std::vector<ingest::BuildingNode> nodes;
  std::vector<WeightedEdge> edges;
  std::vector<std::vector<std::size_t>> adjacency;
  nn::Tensor<float> embeddings;

  std::size_t size() const { return nodes.size(); }
  bool has_crops() const { return !nodes.empty() && !nodes.front().pre_crop.empty(); }
  bool has_embeddings() const { return !embeddings.empty(); }
  /// Weight of the undirected edge {a, b}; 0 when absent.
  double edge_weight(std::size_t a, std::size_t b) const;
  std::size_t labeled_count() const;
};

/// Flattened pre||post crop vector of a node.
std::vector<float> node_feature_vector(const ingest::BuildingNode& node);

/// Delaunay edges over centroids with Gaussian similarity weights
/// w = exp(-|f_i - f_j|^2 / (2 s2)), s2 = mean squared edge distance.
ChipGraph build_chip_graph(std::vector<ingest::BuildingNode> nodes);
ChipGraph build_chip_graph(const ingest::ChipRecord& record);

/// Sorts the edge list by (i, j) and rebuilds sorted adjacency lists.
void rebuild_adjacency(ChipGraph& graph);

/// Replaces crops by the given [n, F] rows (crop memory is released).
void attach_embeddings(ChipGraph& graph, nn::Tensor<float> embeddings);

inline constexpr std::size_t kAllNeighbors = std::numeric_limits<std::size_t>::max();

/// Disjoint union of whole chip graphs.
struct GraphBatch {
  /// [B,6,128,128] (pre channels 0-2, post 3-5) or [B,F] embeddings.
  nn::Tensor<float> features;
  std::vector<WeightedEdge> edges;       // global indices
  std::vector<std::size_t> node_member;  // node -> member position
  std::vector<std::string> member_ids;
  std::vector<std::size_t> member_offsets;
  std::vector<int> labels;  // -1 when unclassified
  std::vector<std::uint8_t> mask;
  /// Directed neighbor lists (CSR) consumed by aggregation.
  std::vector<std::size_t> neighbor_offsets;
  std::vector<std::size_t> neighbor_index;
  std::vector<float> neighbor_weight;

  std::size_t size() const { return labels.size(); }
  std::size_t degree(std::size_t v) const { return neighbor_offsets[v + 1] - neighbor_offsets[v]; }
};

/// Seeded shuffle, then greedy packing of whole graphs up to target_nodes.
/// A graph larger than the target forms its own batch.
std::vector<std::vector<std::size_t>> plan_batches(std::span<const std::size_t> graph_sizes,
                                                   std::size_t target_nodes, std::uint64_t seed);

GraphBatch assemble_batch(std::span<const ChipGraph* const> members);

std::vector<GraphBatch> make_batches(std::span<const ChipGraph> graphs, std::size_t target_nodes,
                                     std::uint64_t seed);

/// Keeps min(fanout, degree) neighbors per node, chosen uniformly without
/// replacement; kAllNeighbors returns the batch unchanged.
GraphBatch neighbor_sample(const GraphBatch& batch, std::size_t fanout, std::uint64_t seed);

/// Graph cache container (little-endian, str = u32 length + bytes):
///   "RSCG" | u16 version | str chip_id | str disaster_id | str disaster_type |
///   u32 n | n x (str node_id | i32 label | f64 cx | f64 cy |
///                f64 min_x | f64 min_y | f64 max_x | f64 max_y) |
///   u32 m | m x (u32 i | u32 j | f64 weight) |
///   u8 feature_kind (0 none, 1 crops, 2 embeddings) |
///   kind 1: u32 C | u32 H | u32 W | n x (pre C*H*W f32 | post C*H*W f32)
///   kind 2: u32 F | n*F f32
inline constexpr std::uint16_t kGraphCacheVersion = 1;

std::vector<std::uint8_t> encode_chip_graph(const ChipGraph& graph);
ChipGraph decode_chip_graph(std::span<const std::uint8_t> bytes);
void save_chip_graph(const std::filesystem::path& path, const ChipGraph& graph);
ChipGraph load_chip_graph(const std::filesystem::path& path);
/// All *.rscg files of a directory, sorted by file name.
std::vector<std::filesystem::path> list_cache(const std::filesystem::path& dir);

/// External node-feature file:
///   "RSNF" | u16 version | str chip_id | u32 n | u32 F | n x (str node_id | F x f32)
struct NodeFeatures {
  std::string chip_id;
  std::vector<std::string> node_ids;
  nn::Tensor<float> values;  // [n, F]
};

std::vector<std::uint8_t> encode_node_features(const NodeFeatures& features);
NodeFeatures decode_node_features(std::span<const std::uint8_t> bytes);

/// Reorders external rows to the graph's node order and attaches them.
void attach_node_features(ChipGraph& graph, const NodeFeatures& features);

}  // namespace ruinscope::graph
