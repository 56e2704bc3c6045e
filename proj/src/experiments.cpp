#include "ruinscope/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "ruinscope/binary_io.hpp"
#include "ruinscope/error.hpp"
#include "ruinscope/optim.hpp"
#include "ruinscope/rng.hpp"

namespace ruinscope::experiments {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<const graph::ChipGraph*> pointers(std::span<const graph::ChipGraph> graphs,
                                              std::span<const std::size_t> index) {
  std::vector<const graph::ChipGraph*> out;
  out.reserve(index.size());
  for (std::size_t i : index) out.push_back(&graphs[i]);
  return out;
}

std::vector<nn::Tensor<float>> snapshot(const std::vector<models::NamedParam<float>>& params) {
  std::vector<nn::Tensor<float>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.var.value());
  return out;
}

void restore(std::vector<models::NamedParam<float>>& params, const std::vector<nn::Tensor<float>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].var.mutable_value() = values[i];
}

std::string format_exact(std::optional<double> v) {
  if (!v) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::string train_description(const ExperimentConfig& c) {
  std::string out;
  for (const auto& d : c.train_disasters) out += (out.empty() ? "" : " + ") + d;
  const bool target_in_train =
      std::find(c.train_disasters.begin(), c.train_disasters.end(), c.target_disaster) != c.train_disasters.end();
  if (!target_in_train && c.leak_fraction > 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " + %g%% ", c.leak_fraction * 100.0);
    out += buf + c.target_disaster;
  }
  return out;
}

nlohmann::json optional_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::string_view encoder_mode_name(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::Train: return "train";
    case EncoderMode::Frozen: return "frozen";
    case EncoderMode::External: return "external";
  }
  return "train";
}

EncoderMode parse_encoder_mode(std::string_view name) {
  if (name == "train") return EncoderMode::Train;
  if (name == "frozen") return EncoderMode::Frozen;
  if (name == "external") return EncoderMode::External;
  throw Error(Errc::ConfigError, "unknown encoder mode '" + std::string(name) + "' (expected train|frozen|external)");
}

std::string_view leak_unit_name(LeakUnit unit) { return unit == LeakUnit::Chips ? "chips" : "buildings"; }

LeakUnit parse_leak_unit(std::string_view name) {
  if (name == "chips") return LeakUnit::Chips;
  if (name == "buildings") return LeakUnit::Buildings;
  throw Error(Errc::ConfigError, "unknown leak unit '" + std::string(name) + "' (expected chips|buildings)");
}

std::string_view model_display_name(models::HeadKind head) {
  return head == models::HeadKind::Sage ? "Graph SAGE" : "Siamese CNN";
}

std::string_view model_key(models::HeadKind head) {
  return head == models::HeadKind::Sage ? "graph_sage" : "siamese_cnn";
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& what) { throw Error(Errc::ConfigError, what); };
  if (c.target_disaster.empty()) fail("target_disaster is required");
  if (c.train_disasters.empty()) fail("train_disasters must not be empty");
  if (!(c.leak_fraction >= 0.0 && c.leak_fraction < 1.0)) fail("leak_fraction must lie in [0, 1)");
  for (double r : {c.train_ratio, c.test_ratio, c.hold_ratio}) {
    if (!(r >= 0.0 && r <= 1.0)) fail("split ratios must lie in [0, 1]");
  }
  if (std::abs(c.train_ratio + c.test_ratio + c.hold_ratio - 1.0) > 1e-9) fail("split ratios must sum to 1");
  if (c.test_ratio <= 0.0 || c.hold_ratio <= 0.0) fail("test and hold ratios must be positive");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) fail("lr must be positive");
  if (c.batch_nodes == 0) fail("batch_nodes must be positive");
  if (c.fanout == 0) fail("fanout must be at least 1");
  if (c.heads.empty()) fail("at least one head is required");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json heads = nlohmann::json::array();
  for (auto h : c.heads) heads.push_back(models::head_name(h));
  return {{"name", c.name},
          {"train_disasters", c.train_disasters},
          {"target_disaster", c.target_disaster},
          {"leak_fraction", c.leak_fraction},
          {"leak_unit", leak_unit_name(c.leak_unit)},
          {"split", {{"train", c.train_ratio}, {"test", c.test_ratio}, {"hold", c.hold_ratio}}},
          {"seed", c.seed},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"batch_nodes", c.batch_nodes},
          {"fanout", c.fanout == graph::kAllNeighbors ? nlohmann::json("all") : nlohmann::json(c.fanout)},
          {"class_weighting", c.class_weighting},
          {"heads", heads},
          {"encoder_mode", encoder_mode_name(c.encoder_mode)},
          {"model", models::to_json(c.model)}};
}

namespace {

ExperimentConfig parse_config(const nlohmann::json& j, const ExperimentConfig& base) {
  if (!j.is_object()) throw Error(Errc::ConfigError, "experiment config must be a JSON object");
  nlohmann::json merged = to_json(base);
  for (const auto& [key, _] : j.items()) {
    if (!merged.contains(key)) throw Error(Errc::ConfigError, "unknown experiment key '" + key + "'");
  }
  merged.merge_patch(j);
  ExperimentConfig c;
  try {
    c.name = merged.at("name").get<std::string>();
    c.train_disasters = merged.at("train_disasters").get<std::vector<std::string>>();
    c.target_disaster = merged.at("target_disaster").get<std::string>();
    c.leak_fraction = merged.at("leak_fraction").get<double>();
    c.leak_unit = parse_leak_unit(merged.at("leak_unit").get<std::string>());
    const auto& s = merged.at("split");
    for (const auto& [key, _] : s.items()) {
      if (key != "train" && key != "test" && key != "hold") throw Error(Errc::ConfigError, "unknown split key '" + key + "'");
    }
    c.train_ratio = s.at("train").get<double>();
    c.test_ratio = s.at("test").get<double>();
    c.hold_ratio = s.at("hold").get<double>();
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.epochs = merged.at("epochs").get<std::size_t>();
    c.lr = merged.at("lr").get<double>();
    c.batch_nodes = merged.at("batch_nodes").get<std::size_t>();
    const auto& f = merged.at("fanout");
    c.fanout = f.is_string() && f.get<std::string>() == "all" ? graph::kAllNeighbors : f.get<std::size_t>();
    c.class_weighting = merged.at("class_weighting").get<bool>();
    c.heads.clear();
    for (const auto& h : merged.at("heads")) {
      const auto name = h.get<std::string>();
      if (name == "both") {
        c.heads = {models::HeadKind::Mlp, models::HeadKind::Sage};
      } else {
        c.heads.push_back(models::parse_head(name));
      }
    }
    c.encoder_mode = parse_encoder_mode(merged.at("encoder_mode").get<std::string>());
    c.model = models::model_config_from_json(merged.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  return c;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const ExperimentConfig& base) {
  ExperimentConfig c = parse_config(j, base);
  validate(c);
  return c;
}

std::vector<ExperimentConfig> experiment_list_from_json(const nlohmann::json& j, const ExperimentConfig& base) {
  if (j.is_object() && j.contains("experiments")) {
    for (const auto& [key, _] : j.items()) {
      if (key != "experiments" && key != "defaults") throw Error(Errc::ConfigError, "unknown top-level key '" + key + "'");
    }
    const ExperimentConfig shared = j.contains("defaults") ? parse_config(j.at("defaults"), base) : base;
    std::vector<ExperimentConfig> out;
    for (const auto& e : j.at("experiments")) out.push_back(experiment_config_from_json(e, shared));
    if (out.empty()) throw Error(Errc::ConfigError, "experiment list is empty");
    return out;
  }
  return {experiment_config_from_json(j, base)};
}

std::vector<ExperimentConfig> standard_suite(const ExperimentConfig& base) {
  const std::string target = "socal-fire";
  const std::vector<std::string> multi{"nepal-flooding", "joplin-tornado", "puna-volcano"};
  std::vector<ExperimentConfig> out(4, base);
  out[0].name = "fire-fire";
  out[0].train_disasters = {"socal-fire", "portugal-fire"};
  out[1].name = "flooding-fire";
  out[1].train_disasters = {"nepal-flooding"};
  out[2].name = "flooding+tornado+volcano-fire";
  out[2].train_disasters = multi;
  out[3].name = "flooding+tornado+volcano+10%fire-fire";
  out[3].train_disasters = multi;
  for (auto& c : out) {
    c.target_disaster = target;
    c.leak_fraction = 0.0;
  }
  out[3].leak_fraction = 0.1;
  for (const auto& c : out) validate(c);
  return out;
}

Split split(std::span<const graph::ChipGraph> graphs, const ExperimentConfig& config) {
  validate(config);
  std::set<std::string> present;
  for (const auto& g : graphs) present.insert(g.disaster_id);
  for (const auto& d : config.train_disasters) {
    if (!present.count(d)) throw Error(Errc::UnknownDisaster, "train disaster '" + d + "' not in corpus");
  }
  if (!present.count(config.target_disaster)) {
    throw Error(Errc::UnknownDisaster, "target disaster '" + config.target_disaster + "' not in corpus");
  }

  std::vector<std::size_t> target;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (graphs[i].disaster_id == config.target_disaster) target.push_back(i);
  }
  std::sort(target.begin(), target.end(),
            [&](std::size_t a, std::size_t b) { return graphs[a].chip_id < graphs[b].chip_id; });
  Rng rng(mix_seed(config.seed, 0x5b117));
  rng.shuffle(std::span<std::size_t>(target));

  const std::size_t n = target.size();
  const auto n_side = std::min(n, static_cast<std::size_t>(std::llround(config.train_ratio * static_cast<double>(n))));
  const auto n_test =
      std::min(n - n_side, static_cast<std::size_t>(std::llround(config.test_ratio * static_cast<double>(n))));
  const std::size_t n_hold = n - n_side - n_test;
  if (n_test == 0 || n_hold == 0) {
    throw Error(Errc::EmptyTarget, "target disaster '" + config.target_disaster + "' has " + std::to_string(n) +
                                       " chips; test and hold cannot both be non-empty");
  }

  Split s;
  const std::span<const std::size_t> side(target.data(), n_side);
  s.test.assign(target.begin() + static_cast<long>(n_side), target.begin() + static_cast<long>(n_side + n_test));
  s.hold.assign(target.begin() + static_cast<long>(n_side + n_test), target.end());

  const bool target_in_train = std::find(config.train_disasters.begin(), config.train_disasters.end(),
                                         config.target_disaster) != config.train_disasters.end();
  if (target_in_train) {
    s.train.assign(side.begin(), side.end());
  } else if (config.leak_fraction > 0.0) {
    if (config.leak_unit == LeakUnit::Chips) {
      const auto k = static_cast<std::size_t>(std::llround(config.leak_fraction * static_cast<double>(n_side)));
      s.leaked.assign(side.begin(), side.begin() + static_cast<long>(std::min(k, n_side)));
    } else {
      std::size_t total = 0;
      for (std::size_t i : side) total += graphs[i].size();
      const auto quota = static_cast<std::size_t>(std::llround(config.leak_fraction * static_cast<double>(total)));
      std::size_t taken = 0;
      for (std::size_t i : side) {
        if (taken >= quota) break;
        s.leaked.push_back(i);
        taken += graphs[i].size();
      }
    }
    s.train = s.leaked;
  }
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto& d = graphs[i].disaster_id;
    if (d != config.target_disaster &&
        std::find(config.train_disasters.begin(), config.train_disasters.end(), d) != config.train_disasters.end()) {
      s.train.push_back(i);
    }
  }
  for (auto* v : {&s.train, &s.test, &s.hold, &s.leaked}) std::sort(v->begin(), v->end());
  if (s.train.empty()) throw Error(Errc::EmptyInput, "training split is empty");
  return s;
}

nlohmann::json split_manifest(std::span<const graph::ChipGraph> graphs, const Split& s) {
  auto ids = [&](const std::vector<std::size_t>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i : v) out.push_back(graphs[i].chip_id);
    return out;
  };
  auto labeled = [&](const std::vector<std::size_t>& v) {
    std::size_t n = 0;
    for (std::size_t i : v) n += graphs[i].labeled_count();
    return n;
  };
  return {{"train", ids(s.train)},
          {"test", ids(s.test)},
          {"hold", ids(s.hold)},
          {"leaked", ids(s.leaked)},
          {"labeled_nodes", {{"train", labeled(s.train)}, {"test", labeled(s.test)}, {"hold", labeled(s.hold)}}}};
}

std::vector<double> class_weights(std::span<const graph::ChipGraph* const> graphs, std::size_t classes) {
  std::vector<std::size_t> count(classes, 0);
  std::size_t total = 0;
  for (const auto* g : graphs) {
    for (const auto& node : g->nodes) {
      if (!ingest::is_labeled(node.label)) continue;
      const auto c = static_cast<std::size_t>(node.label);
      if (c >= classes) throw Error(Errc::OutOfRange, "label exceeds class count");
      ++count[c];
      ++total;
    }
  }
  std::vector<double> w(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (count[c] > 0) w[c] = static_cast<double>(total) / (static_cast<double>(classes) * static_cast<double>(count[c]));
  }
  return w;
}

FitResult fit(Model& model, std::span<const graph::ChipGraph* const> train,
              std::span<const graph::ChipGraph* const> test, const FitOptions& options,
              const std::function<void(const EpochLog&)>& progress) {
  if (train.empty()) throw Error(Errc::EmptyInput, "no training graphs");
  if (!(options.lr > 0.0)) throw Error(Errc::ConfigError, "lr must be positive");
  const std::size_t classes = model.config().head.classes;
  auto named = options.train_encoder ? model.parameters() : model.head_parameters();
  std::vector<nn::Var<float>> params;
  for (const auto& p : named) params.push_back(p.var);
  auto all = model.parameters();

  std::vector<float> weights(classes, 1.0f);
  if (options.class_weighting) {
    const auto w = class_weights(train, classes);
    for (std::size_t c = 0; c < classes; ++c) weights[c] = static_cast<float>(w[c]);
  }

  nn::AdamState<float> adam;
  adam.config.lr = options.lr;
  std::vector<std::size_t> sizes;
  for (const auto* g : train) sizes.push_back(g->size());

  FitResult result;
  std::optional<double> best;
  std::vector<nn::Tensor<float>> best_values;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t steps = 0;
    const auto plan = graph::plan_batches(sizes, options.batch_nodes, mix_seed(options.seed, 1000 + epoch));
    for (std::size_t b = 0; b < plan.size(); ++b) {
      std::vector<const graph::ChipGraph*> members;
      for (std::size_t i : plan[b]) members.push_back(train[i]);
      graph::GraphBatch batch = graph::assemble_batch(members);
      if (std::none_of(batch.mask.begin(), batch.mask.end(), [](std::uint8_t m) { return m != 0; })) continue;
      const std::uint64_t step_seed = mix_seed(options.seed, (epoch << 24) + b);
      if (options.fanout != graph::kAllNeighbors) batch = graph::neighbor_sample(batch, options.fanout, step_seed);
      const auto logits = model.logits(batch, true, mix_seed(step_seed, 1));
      const auto loss = nn::weighted_cross_entropy(logits, std::span<const int>(batch.labels),
                                                   std::span<const float>(weights),
                                                   std::span<const std::uint8_t>(batch.mask));
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw Error(Errc::NonFiniteLoss, "epoch " + std::to_string(epoch) + ": loss is not finite");
      }
      nn::backward(loss);
      nn::adam_step(std::span<nn::Var<float>>(params), adam);
      for (auto& p : params) p.zero_grad();
      loss_sum += value;
      ++steps;
    }
    EpochLog entry{epoch, steps ? loss_sum / static_cast<double>(steps) : 0.0, std::nullopt};
    if (!test.empty()) {
      entry.test_macro_f1 = evaluate(model, test, options.batch_nodes).macro_f1;
      if (!best || *entry.test_macro_f1 > *best) {
        best = entry.test_macro_f1;
        best_values = snapshot(all);
        result.best_epoch = epoch;
      }
    } else {
      result.best_epoch = epoch;
    }
    result.log.push_back(entry);
    if (progress) progress(entry);
  }
  if (!best_values.empty()) restore(all, best_values);
  return result;
}

Predictions predict(const Model& model, std::span<const graph::ChipGraph* const> graphs, std::size_t batch_nodes) {
  Predictions out;
  std::vector<const graph::ChipGraph*> members;
  std::size_t pending = 0;
  auto flush = [&] {
    if (members.empty()) return;
    const graph::GraphBatch batch = graph::assemble_batch(members);
    const nn::Tensor<float> probs = model.forward(batch);
    const std::size_t k = probs.dim(1);
    for (std::size_t v = 0; v < batch.size(); ++v) {
      if (!batch.mask[v]) continue;
      for (std::size_t c = 0; c < k; ++c) out.probs.push_back(probs[v * k + c]);
      out.labels.push_back(batch.labels[v]);
      const auto* g = members[batch.node_member[v]];
      out.node_ids.push_back(g->nodes[v - batch.member_offsets[batch.node_member[v]]].id);
    }
    members.clear();
    pending = 0;
  };
  for (const auto* g : graphs) {
    if (pending > 0 && pending + g->size() > batch_nodes) flush();
    members.push_back(g);
    pending += g->size();
  }
  flush();
  return out;
}

metrics::Report evaluate(const Model& model, std::span<const graph::ChipGraph* const> graphs,
                         std::size_t batch_nodes) {
  const Predictions p = predict(model, graphs, batch_nodes);
  return metrics::evaluate(p.probs, p.labels, model.config().head.classes);
}

std::optional<double> metric_value(const metrics::Report& r, std::string_view key) {
  if (key == "accuracy") return r.accuracy;
  if (key == "macro_f1") return r.macro_f1;
  if (key == "weighted_f1") return r.weighted_f1;
  if (key == "auc") return r.auc;
  throw Error(Errc::ConfigError, "unknown metric '" + std::string(key) + "'");
}

std::array<std::optional<double>, 4> generalization_gaps(const metrics::Report& train, const metrics::Report& hold) {
  std::array<std::optional<double>, 4> out;
  for (std::size_t m = 0; m < kMetricKeys.size(); ++m) {
    const auto a = metric_value(train, kMetricKeys[m]);
    const auto b = metric_value(hold, kMetricKeys[m]);
    if (a && b) out[m] = *a - *b;
  }
  return out;
}

ExperimentReport run_experiment(std::span<const graph::ChipGraph> graphs, const ExperimentConfig& config,
                                std::size_t index, const std::function<void(const std::string&)>& log) {
  const auto start = Clock::now();
  const Split s = split(graphs, config);
  const auto train = pointers(graphs, s.train);
  const auto test = pointers(graphs, s.test);
  const auto hold = pointers(graphs, s.hold);

  models::ModelConfig model_cfg = config.model;
  for (const auto* list : {&train, &test, &hold}) {
    for (const auto* g : *list) {
      if (config.encoder_mode == EncoderMode::Train ? !g->has_crops() : !g->has_embeddings()) {
        throw Error(Errc::ConfigError, "chip '" + g->chip_id + "' lacks " +
                                           (config.encoder_mode == EncoderMode::Train ? "crops" : "node features") +
                                           " required by encoder mode " +
                                           std::string(encoder_mode_name(config.encoder_mode)));
      }
      if (g->has_embeddings()) model_cfg.encoder.feature_dim = g->embeddings.dim(1);
    }
  }

  ExperimentReport report;
  report.index = index;
  report.config = config;
  report.splits = split_manifest(graphs, s);
  for (const auto head : config.heads) {
    const auto model_start = Clock::now();
    models::ModelConfig cfg = model_cfg;
    cfg.head.kind = head;
    Model model(cfg, config.seed);
    FitOptions options;
    options.epochs = config.epochs;
    options.lr = config.lr;
    options.batch_nodes = config.batch_nodes;
    options.fanout = config.fanout;
    options.class_weighting = config.class_weighting;
    options.train_encoder = config.encoder_mode == EncoderMode::Train;
    options.seed = config.seed;
    ModelResult result;
    result.head = head;
    result.fit = fit(model, train, test, options, [&](const EpochLog& e) {
      if (!log) return;
      char buf[160];
      std::snprintf(buf, sizeof buf, "[%zu %s] epoch %zu loss %.5f test macro F1 %s", index,
                    std::string(models::head_name(head)).c_str(), e.epoch, e.loss,
                    metrics::format_metric(e.test_macro_f1).c_str());
      log(buf);
    });
    result.splits[0] = evaluate(model, train, config.batch_nodes);
    result.splits[1] = evaluate(model, test, config.batch_nodes);
    result.splits[2] = evaluate(model, hold, config.batch_nodes);
    result.gaps = generalization_gaps(result.splits[0], result.splits[2]);
    result.seconds = seconds_since(model_start);
    report.models.push_back(std::move(result));
  }
  std::stable_sort(report.models.begin(), report.models.end(), [](const ModelResult& a, const ModelResult& b) {
    return a.head == models::HeadKind::Mlp && b.head == models::HeadKind::Sage;
  });
  report.seconds = seconds_since(start);
  return report;
}

nlohmann::json to_json(const ModelResult& r) {
  nlohmann::json splits = nlohmann::json::object();
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) splits[std::string(kSplitNames[i])] = metrics::to_json(r.splits[i]);
  nlohmann::json gaps = nlohmann::json::object();
  for (std::size_t m = 0; m < kMetricKeys.size(); ++m) gaps[std::string(kMetricKeys[m])] = optional_json(r.gaps[m]);
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.fit.log) {
    epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"test_macro_f1", optional_json(e.test_macro_f1)}});
  }
  return {{"model", model_display_name(r.head)},
          {"key", model_key(r.head)},
          {"head", models::head_name(r.head)},
          {"splits", splits},
          {"gaps", gaps},
          {"best_epoch", r.fit.best_epoch},
          {"epochs", epochs},
          {"seconds", r.seconds}};
}

nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : r.models) models.push_back(to_json(m));
  return {{"index", r.index},
          {"name", r.config.name},
          {"train", train_description(r.config)},
          {"test_hold", r.config.target_disaster},
          {"config", to_json(r.config)},
          {"splits", r.splits},
          {"models", models},
          {"seconds", r.seconds}};
}

nlohmann::json suite_json(std::span<const ExperimentReport> reports) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : reports) list.push_back(to_json(r));
  return {{"format", "ruinscope-experiments"}, {"experiments", list}};
}

std::string table_csv(std::span<const ExperimentReport> reports) {
  std::vector<models::HeadKind> heads;
  for (auto h : {models::HeadKind::Mlp, models::HeadKind::Sage}) {
    const bool used = std::any_of(reports.begin(), reports.end(), [&](const ExperimentReport& r) {
      return std::any_of(r.models.begin(), r.models.end(), [&](const ModelResult& m) { return m.head == h; });
    });
    if (used) heads.push_back(h);
  }
  static constexpr std::array<std::string_view, 4> kColumns{"Acc", "Macro F1", "Weighted F1", "AUC"};
  std::string out = "experiment_index,train,test_hold,split";
  for (auto h : heads) {
    for (auto col : kColumns) out += "," + std::string(model_display_name(h)) + " " + std::string(col);
  }
  out += "\n";
  for (const auto& r : reports) {
    for (std::size_t s = 0; s < kSplitNames.size(); ++s) {
      out += std::to_string(r.index) + "," + train_description(r.config) + "," + r.config.target_disaster + "," +
             std::string(kSplitNames[s]);
      for (auto h : heads) {
        const auto it = std::find_if(r.models.begin(), r.models.end(), [&](const ModelResult& m) { return m.head == h; });
        for (auto key : kMetricKeys) {
          out += ",";
          if (it != r.models.end()) out += metrics::format_metric(metric_value(it->splits[s], key));
        }
      }
      out += "\n";
    }
  }
  return out;
}

std::string gap_csv(std::span<const ExperimentReport> reports) {
  std::string out = "experiment_index,model,metric,train_minus_hold\n";
  for (const auto& r : reports) {
    for (const auto& m : r.models) {
      for (std::size_t k = 0; k < kMetricKeys.size(); ++k) {
        out += std::to_string(r.index) + "," + std::string(model_key(m.head)) + "," + std::string(kMetricKeys[k]) +
               "," + format_exact(m.gaps[k]) + "\n";
      }
    }
  }
  return out;
}

ReportPaths write_reports(const std::filesystem::path& out_dir, std::span<const ExperimentReport> reports) {
  std::filesystem::create_directories(out_dir);
  ReportPaths paths{out_dir / "report.json", out_dir / "table.csv", out_dir / "gaps.csv"};
  io::write_text_atomic(paths.report_json, suite_json(reports).dump(2) + "\n");
  io::write_text_atomic(paths.table_csv, table_csv(reports));
  io::write_text_atomic(paths.gap_csv, gap_csv(reports));
  return paths;
}

void embed_frozen(std::span<graph::ChipGraph> graphs, const models::ModelConfig& model, std::uint64_t seed) {
  const Model encoder(model, seed);
  for (auto& g : graphs) {
    if (g.has_embeddings()) continue;
    if (!g.has_crops()) throw Error(Errc::ConfigError, "chip '" + g.chip_id + "' has neither crops nor embeddings");
    encoder.embed_graph(g);
  }
}

std::vector<graph::ChipGraph> load_corpus(const std::filesystem::path& cache_dir, EncoderMode mode,
                                          const models::ModelConfig& model, std::uint64_t seed,
                                          const std::filesystem::path& features_dir,
                                          std::span<const std::string> disasters) {
  std::optional<Model> encoder;
  if (mode == EncoderMode::Frozen) encoder.emplace(model, seed);
  std::vector<graph::ChipGraph> out;
  for (const auto& path : graph::list_cache(cache_dir)) {
    graph::ChipGraph g = graph::load_chip_graph(path);
    if (!disasters.empty() && std::find(disasters.begin(), disasters.end(), g.disaster_id) == disasters.end()) {
      continue;
    }
    if (mode == EncoderMode::Frozen && !g.has_embeddings()) {
      encoder->embed_graph(g);
    } else if (mode == EncoderMode::External) {
      const auto file = features_dir / (g.chip_id + ".rsnf");
      graph::attach_node_features(g, graph::decode_node_features(io::read_file(file)));
    }
    out.push_back(std::move(g));
  }
  if (out.empty()) throw Error(Errc::EmptyInput, "no cached graphs under " + cache_dir.string());
  return out;
}

}  // namespace ruinscope::experiments
