#include "ruinscope/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ruinscope/binary_io.hpp"
#include "ruinscope/error.hpp"
#include "ruinscope/geo.hpp"
#include "ruinscope/rng.hpp"

namespace ruinscope::graph {
namespace {

constexpr double kBandwidthFloor = 1e-12;

double squared_distance(const ingest::BuildingNode& a, const ingest::BuildingNode& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pre_crop.data.size(); ++i) {
    const double d = static_cast<double>(a.pre_crop.data[i]) - b.pre_crop.data[i];
    acc += d * d;
  }
  for (std::size_t i = 0; i < a.post_crop.data.size(); ++i) {
    const double d = static_cast<double>(a.post_crop.data[i]) - b.post_crop.data[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

double ChipGraph::edge_weight(std::size_t a, std::size_t b) const {
  const auto key = a < b ? std::pair{a, b} : std::pair{b, a};
  auto it = std::lower_bound(edges.begin(), edges.end(), key,
                             [](const WeightedEdge& e, const auto& k) { return std::pair{e.i, e.j} < k; });
  if (it != edges.end() && it->i == key.first && it->j == key.second) return it->weight;
  return 0.0;
}

std::size_t ChipGraph::labeled_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return ingest::is_labeled(n.label); }));
}

std::vector<float> node_feature_vector(const ingest::BuildingNode& node) {
  std::vector<float> out(node.pre_crop.data);
  out.insert(out.end(), node.post_crop.data.begin(), node.post_crop.data.end());
  return out;
}

void rebuild_adjacency(ChipGraph& graph) {
  std::sort(graph.edges.begin(), graph.edges.end(),
            [](const WeightedEdge& a, const WeightedEdge& b) { return std::pair{a.i, a.j} < std::pair{b.i, b.j}; });
  graph.adjacency.assign(graph.nodes.size(), {});
  for (const auto& e : graph.edges) {
    graph.adjacency[e.i].push_back(e.j);
    graph.adjacency[e.j].push_back(e.i);
  }
  for (auto& nb : graph.adjacency) std::sort(nb.begin(), nb.end());
}

ChipGraph build_chip_graph(std::vector<ingest::BuildingNode> nodes) {
  std::vector<geo::Point2> centroids;
  centroids.reserve(nodes.size());
  for (const auto& n : nodes) centroids.push_back(n.centroid);
  const geo::Triangulation tri = geo::delaunay(centroids);

  ChipGraph g;
  g.nodes = std::move(nodes);
  std::vector<double> d2;
  d2.reserve(tri.edges.size());
  for (const auto& [i, j] : tri.edges) d2.push_back(squared_distance(g.nodes[i], g.nodes[j]));
  double sigma2 = 0.0;
  for (double v : d2) sigma2 += v;
  sigma2 = d2.empty() ? 0.0 : sigma2 / static_cast<double>(d2.size());
  if (sigma2 < kBandwidthFloor) sigma2 = kBandwidthFloor;
  for (std::size_t k = 0; k < tri.edges.size(); ++k) {
    const double w = std::exp(-d2[k] / (2.0 * sigma2));
    // Underflow would leave a zero weight outside (0, 1].
    g.edges.push_back({tri.edges[k].first, tri.edges[k].second, std::max(w, std::numeric_limits<double>::min())});
  }
  rebuild_adjacency(g);
  return g;
}

ChipGraph build_chip_graph(const ingest::ChipRecord& record) {
  ChipGraph g = build_chip_graph(ingest::extract_nodes(record));
  g.chip_id = record.chip_id;
  g.disaster_id = record.disaster_id;
  g.disaster_type = record.disaster_type;
  return g;
}

void attach_embeddings(ChipGraph& graph, nn::Tensor<float> embeddings) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != graph.size()) {
    throw Error(Errc::ShapeMismatch, "embeddings " + nn::shape_str(embeddings.shape()) + " for " +
                                         std::to_string(graph.size()) + " nodes");
  }
  graph.embeddings = std::move(embeddings);
  for (auto& n : graph.nodes) {
    n.pre_crop = Image();
    n.post_crop = Image();
  }
}

std::vector<std::vector<std::size_t>> plan_batches(std::span<const std::size_t> graph_sizes,
                                                   std::size_t target_nodes, std::uint64_t seed) {
  std::vector<std::size_t> order(graph_sizes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  std::size_t nodes = 0;
  for (std::size_t g : order) {
    if (!current.empty() && nodes + graph_sizes[g] > target_nodes) {
      batches.push_back(std::move(current));
      current.clear();
      nodes = 0;
    }
    current.push_back(g);
    nodes += graph_sizes[g];
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

GraphBatch assemble_batch(std::span<const ChipGraph* const> members) {
  GraphBatch b;
  std::size_t total = 0;
  for (const auto* g : members) total += g->size();
  if (members.empty()) return b;
  const bool embedded = members.front()->has_embeddings();
  std::size_t row = 0;
  if (embedded) {
    const std::size_t f = members.front()->embeddings.dim(1);
    b.features = nn::Tensor<float>({total, f});
    row = f;
  } else {
    const auto& crop = members.front()->nodes.front().pre_crop;
    b.features = nn::Tensor<float>({total, static_cast<std::size_t>(2 * crop.channels),
                                    static_cast<std::size_t>(crop.height), static_cast<std::size_t>(crop.width)});
    row = 2 * crop.data.size();
  }
  std::size_t offset = 0;
  for (std::size_t m = 0; m < members.size(); ++m) {
    const ChipGraph& g = *members[m];
    if (g.has_embeddings() != embedded) {
      throw Error(Errc::ShapeMismatch, "batch mixes embedded and crop-backed graphs");
    }
    b.member_ids.push_back(g.chip_id);
    b.member_offsets.push_back(offset);
    for (std::size_t v = 0; v < g.size(); ++v) {
      float* dst = b.features.ptr() + (offset + v) * row;
      if (embedded) {
        if (g.embeddings.dim(1) != row) throw Error(Errc::ShapeMismatch, "embedding width differs across graphs");
        std::copy_n(g.embeddings.ptr() + v * row, row, dst);
      } else {
        const auto& n = g.nodes[v];
        if (2 * n.pre_crop.data.size() != row || n.post_crop.data.size() != n.pre_crop.data.size()) {
          throw Error(Errc::ShapeMismatch, "crop size differs across nodes");
        }
        std::copy(n.pre_crop.data.begin(), n.pre_crop.data.end(), dst);
        std::copy(n.post_crop.data.begin(), n.post_crop.data.end(), dst + row / 2);
      }
      b.node_member.push_back(m);
      const int label = static_cast<int>(g.nodes[v].label);
      b.labels.push_back(label);
      b.mask.push_back(label >= 0 ? 1 : 0);
    }
    for (const auto& e : g.edges) b.edges.push_back({e.i + offset, e.j + offset, e.weight});
    offset += g.size();
  }
  b.neighbor_offsets.assign(total + 1, 0);
  for (std::size_t m = 0; m < members.size(); ++m) {
    const ChipGraph& g = *members[m];
    const std::size_t base = b.member_offsets[m];
    for (std::size_t v = 0; v < g.size(); ++v) {
      for (std::size_t u : g.adjacency[v]) {
        b.neighbor_index.push_back(base + u);
        b.neighbor_weight.push_back(static_cast<float>(g.edge_weight(v, u)));
      }
      b.neighbor_offsets[base + v + 1] = b.neighbor_index.size();
    }
  }
  return b;
}

std::vector<GraphBatch> make_batches(std::span<const ChipGraph> graphs, std::size_t target_nodes,
                                     std::uint64_t seed) {
  std::vector<std::size_t> sizes;
  for (const auto& g : graphs) sizes.push_back(g.size());
  std::vector<GraphBatch> out;
  for (const auto& plan : plan_batches(sizes, target_nodes, seed)) {
    std::vector<const ChipGraph*> members;
    for (std::size_t i : plan) members.push_back(&graphs[i]);
    out.push_back(assemble_batch(members));
  }
  return out;
}

GraphBatch neighbor_sample(const GraphBatch& batch, std::size_t fanout, std::uint64_t seed) {
  if (fanout == kAllNeighbors) return batch;
  if (fanout == 0) throw Error(Errc::ConfigError, "fanout must be at least 1");
  GraphBatch out = batch;
  out.neighbor_index.clear();
  out.neighbor_weight.clear();
  out.neighbor_offsets.assign(batch.size() + 1, 0);
  Rng rng(seed);
  std::vector<std::size_t> pick;
  for (std::size_t v = 0; v < batch.size(); ++v) {
    const std::size_t begin = batch.neighbor_offsets[v];
    const std::size_t deg = batch.degree(v);
    pick.resize(deg);
    for (std::size_t k = 0; k < deg; ++k) pick[k] = begin + k;
    const std::size_t keep = std::min(fanout, deg);
    // Partial Fisher-Yates: the first `keep` slots are a uniform sample.
    for (std::size_t k = 0; k < keep && keep < deg; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.index(deg - k));
      std::swap(pick[k], pick[j]);
    }
    pick.resize(keep);
    std::sort(pick.begin(), pick.end());
    for (std::size_t p : pick) {
      out.neighbor_index.push_back(batch.neighbor_index[p]);
      out.neighbor_weight.push_back(batch.neighbor_weight[p]);
    }
    out.neighbor_offsets[v + 1] = out.neighbor_index.size();
  }
  return out;
}

std::vector<std::uint8_t> encode_chip_graph(const ChipGraph& graph) {
  io::Writer w;
  w.magic("RSCG");
  w.u16(kGraphCacheVersion);
  w.str(graph.chip_id);
  w.str(graph.disaster_id);
  w.str(graph.disaster_type);
  w.u32(static_cast<std::uint32_t>(graph.size()));
  for (const auto& n : graph.nodes) {
    w.str(n.id);
    w.i32(static_cast<std::int32_t>(n.label));
    w.f64(n.centroid.x);
    w.f64(n.centroid.y);
    w.f64(n.envelope.min_x);
    w.f64(n.envelope.min_y);
    w.f64(n.envelope.max_x);
    w.f64(n.envelope.max_y);
  }
  w.u32(static_cast<std::uint32_t>(graph.edges.size()));
  for (const auto& e : graph.edges) {
    w.u32(static_cast<std::uint32_t>(e.i));
    w.u32(static_cast<std::uint32_t>(e.j));
    w.f64(e.weight);
  }
  if (graph.has_embeddings()) {
    w.u8(2);
    w.u32(static_cast<std::uint32_t>(graph.embeddings.dim(1)));
    for (float v : graph.embeddings.data()) w.f32(v);
  } else if (graph.has_crops()) {
    const Image& first = graph.nodes.front().pre_crop;
    w.u8(1);
    w.u32(static_cast<std::uint32_t>(first.channels));
    w.u32(static_cast<std::uint32_t>(first.height));
    w.u32(static_cast<std::uint32_t>(first.width));
    for (const auto& n : graph.nodes) {
      for (float v : n.pre_crop.data) w.f32(v);
      for (float v : n.post_crop.data) w.f32(v);
    }
  } else {
    w.u8(0);
  }
  return w.take();
}

ChipGraph decode_chip_graph(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("RSCG");
  const std::uint16_t version = r.u16();
  if (version != kGraphCacheVersion) throw Error(Errc::ParseError, "unsupported RSCG version " + std::to_string(version));
  ChipGraph g;
  g.chip_id = r.str();
  g.disaster_id = r.str();
  g.disaster_type = r.str();
  g.nodes.resize(r.u32());
  for (auto& n : g.nodes) {
    n.id = r.str();
    const std::int32_t label = r.i32();
    if (label < -1 || label >= ingest::kNumClasses) throw Error(Errc::ParseError, "bad label in graph cache");
    n.label = static_cast<ingest::DamageClass>(label);
    n.centroid.x = r.f64();
    n.centroid.y = r.f64();
    n.envelope.min_x = r.f64();
    n.envelope.min_y = r.f64();
    n.envelope.max_x = r.f64();
    n.envelope.max_y = r.f64();
  }
  g.edges.resize(r.u32());
  for (auto& e : g.edges) {
    e.i = r.u32();
    e.j = r.u32();
    e.weight = r.f64();
    if (e.i >= e.j || e.j >= g.nodes.size()) throw Error(Errc::ParseError, "bad edge in graph cache");
  }
  const std::uint8_t kind = r.u8();
  if (kind == 2) {
    const std::size_t f = r.u32();
    std::vector<float> data(g.size() * f);
    for (auto& v : data) v = r.f32();
    g.embeddings = nn::Tensor<float>({g.size(), f}, std::move(data));
  } else if (kind == 1) {
    const int c = static_cast<int>(r.u32()), h = static_cast<int>(r.u32()), wd = static_cast<int>(r.u32());
    for (auto& n : g.nodes) {
      n.pre_crop = Image(c, h, wd);
      n.post_crop = Image(c, h, wd);
      for (auto& v : n.pre_crop.data) v = r.f32();
      for (auto& v : n.post_crop.data) v = r.f32();
    }
  } else if (kind != 0) {
    throw Error(Errc::ParseError, "unknown feature kind in graph cache");
  }
  if (!r.at_end()) throw Error(Errc::ParseError, "trailing bytes in graph cache");
  rebuild_adjacency(g);
  return g;
}

void save_chip_graph(const std::filesystem::path& path, const ChipGraph& graph) {
  io::write_file_atomic(path, encode_chip_graph(graph));
}

ChipGraph load_chip_graph(const std::filesystem::path& path) {
  try {
    return decode_chip_graph(io::read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::filesystem::path> list_cache(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::Io, "no cache directory " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".rscg") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint8_t> encode_node_features(const NodeFeatures& features) {
  if (features.values.rank() != 2 || features.values.dim(0) != features.node_ids.size()) {
    throw Error(Errc::ShapeMismatch, "node feature rows do not match node ids");
  }
  io::Writer w;
  w.magic("RSNF");
  w.u16(1);
  w.str(features.chip_id);
  const std::size_t f = features.values.dim(1);
  w.u32(static_cast<std::uint32_t>(features.node_ids.size()));
  w.u32(static_cast<std::uint32_t>(f));
  for (std::size_t i = 0; i < features.node_ids.size(); ++i) {
    w.str(features.node_ids[i]);
    for (std::size_t k = 0; k < f; ++k) w.f32(features.values[i * f + k]);
  }
  return w.take();
}

NodeFeatures decode_node_features(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("RSNF");
  if (r.u16() != 1) throw Error(Errc::ParseError, "unsupported RSNF version");
  NodeFeatures out;
  out.chip_id = r.str();
  const std::size_t n = r.u32();
  const std::size_t f = r.u32();
  std::vector<float> data(n * f);
  for (std::size_t i = 0; i < n; ++i) {
    out.node_ids.push_back(r.str());
    for (std::size_t k = 0; k < f; ++k) data[i * f + k] = r.f32();
  }
  if (!r.at_end()) throw Error(Errc::ParseError, "trailing bytes in node feature file");
  out.values = nn::Tensor<float>({n, f}, std::move(data));
  return out;
}

void attach_node_features(ChipGraph& graph, const NodeFeatures& features) {
  std::unordered_map<std::string, std::size_t> row;
  for (std::size_t i = 0; i < features.node_ids.size(); ++i) row[features.node_ids[i]] = i;
  const std::size_t f = features.values.dim(1);
  nn::Tensor<float> emb({graph.size(), f});
  for (std::size_t v = 0; v < graph.size(); ++v) {
    auto it = row.find(graph.nodes[v].id);
    if (it == row.end()) {
      throw Error(Errc::ParseError, "chip " + graph.chip_id + ": no external features for node " + graph.nodes[v].id);
    }
    std::copy_n(features.values.ptr() + it->second * f, f, emb.ptr() + v * f);
  }
  attach_embeddings(graph, std::move(emb));
}

}  // namespace ruinscope::graph
