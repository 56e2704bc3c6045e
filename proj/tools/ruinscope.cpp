#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ruinscope/binary_io.hpp"
#include "ruinscope/checkpoint.hpp"
#include "ruinscope/error.hpp"
#include "ruinscope/experiments.hpp"
#include "ruinscope/graph.hpp"
#include "ruinscope/ingest.hpp"
#include "ruinscope/kernels.hpp"
#include "ruinscope/synth.hpp"

namespace fs = std::filesystem;
using namespace ruinscope;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t jobs = 1;
  std::string out;
  bool quiet = false;
};

fs::path default_cache_dir() {
  if (const char* env = std::getenv("RUINSCOPE_CACHE_DIR"); env && *env) return env;
  return "cache";
}

void note(const Globals& g, const std::string& line) {
  if (!g.quiet) std::cerr << line << "\n";
}

/// One manifest per artifact-producing command, written next to its outputs.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void config(json c) { config_ = std::move(c); }
  void seed(std::uint64_t s) { seed_ = s; }
  void input(const fs::path& p) { inputs_[p.string()] = io::fnv1a_hex(io::read_file(p)); }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }

  fs::path write(const fs::path& dir) const {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const json j{{"command", command_},
                 {"config", config_},
                 {"seed", seed_},
                 {"version", RUINSCOPE_VERSION},
                 {"inputs", inputs_},
                 {"outputs", outputs_},
                 {"wall_seconds", wall}};
    const fs::path path = dir / "run_manifest.json";
    io::write_text_atomic(path, j.dump(2) + "\n");
    return path;
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point start_;
  json config_ = json::object();
  std::uint64_t seed_ = 0;
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
};

json read_json_file(const fs::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- build-graph

struct BuildGraphArgs {
  std::string manifest;
  std::string xbd_dir;
  std::size_t limit = 0;
};

struct ChipOutcome {
  enum Kind { Kept, Filtered, Failed } kind = Failed;
  std::string detail;
  fs::path file;
};

ChipOutcome build_one(const ingest::ManifestRow& row, const fs::path& out_dir) {
  ChipOutcome r;
  try {
    const ingest::ChipRecord rec = ingest::load_chip(row);
    const auto decision = ingest::filter_chip(rec);
    if (!decision.keep) {
      r.kind = ChipOutcome::Filtered;
      r.detail = ingest::filter_reason_name(decision.reason);
      return r;
    }
    const graph::ChipGraph g = graph::build_chip_graph(rec);
    r.file = out_dir / (g.chip_id + ".rscg");
    graph::save_chip_graph(r.file, g);
    r.kind = ChipOutcome::Kept;
  } catch (const std::exception& e) {
    r.kind = ChipOutcome::Failed;
    r.detail = e.what();
    r.file.clear();
  }
  return r;
}

int cmd_build_graph(const Globals& g, const BuildGraphArgs& a) {
  std::vector<ingest::ManifestRow> rows =
      a.manifest.empty() ? ingest::xbd_manifest(a.xbd_dir, a.limit ? std::optional(a.limit) : std::nullopt)
                         : ingest::read_manifest(a.manifest);
  if (!a.manifest.empty() && a.limit > 0 && rows.size() > a.limit) rows.resize(a.limit);
  const fs::path out_dir = g.out.empty() ? default_cache_dir() : fs::path(g.out);
  fs::create_directories(out_dir);

  RunManifest manifest("build-graph");
  manifest.seed(g.seed);
  manifest.config({{"manifest", a.manifest}, {"xbd_dir", a.xbd_dir}, {"limit", a.limit}, {"jobs", g.jobs}});

  std::vector<ChipOutcome> outcomes(rows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) outcomes[i] = build_one(rows[i], out_dir);
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(g.jobs, rows.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::string filter_log = "chip_id,reason\n";
  std::vector<std::string> errors;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const auto& o = outcomes[i];
    for (const auto& p : {row.label_path, row.pre_path, row.post_path}) {
      if (fs::exists(p)) manifest.input(p);
    }
    switch (o.kind) {
      case ChipOutcome::Kept:
        ++kept;
        manifest.output(o.file);
        break;
      case ChipOutcome::Filtered:
        filter_log += row.chip_id + "," + o.detail + "\n";
        break;
      case ChipOutcome::Failed:
        errors.push_back(row.chip_id + " (" + row.label_path.string() + ", " + row.pre_path.string() + ", " +
                         row.post_path.string() + "): " + o.detail);
        break;
    }
  }
  const fs::path log_path = out_dir / "filter_log.csv";
  io::write_text_atomic(log_path, filter_log);
  manifest.output(log_path);
  manifest.write(out_dir);
  note(g, "build-graph: " + std::to_string(kept) + " cached, " +
              std::to_string(rows.size() - kept - errors.size()) + " filtered, " + std::to_string(errors.size()) +
              " failed -> " + out_dir.string());
  if (!errors.empty()) {
    std::cerr << "build-graph: " << errors.size() << " chip(s) failed:\n";
    for (const auto& e : errors) std::cerr << "  " << e << "\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------- experiment/train

struct RunArgs {
  std::string config;
  std::string suite;
  std::string cache;
  std::string features_dir;
  std::string head;
  std::vector<std::string> train_disasters;
  std::string target;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch_nodes;
  std::string fanout;
  std::string aggregation;
  std::string encoder_mode;
  std::optional<double> leak_fraction;
};

void apply_flags(experiments::ExperimentConfig& c, const Globals& g, const RunArgs& a) {
  if (g.seed_set) c.seed = g.seed;
  if (!a.head.empty()) {
    c.heads = a.head == "both" ? std::vector{models::HeadKind::Mlp, models::HeadKind::Sage}
                               : std::vector{models::parse_head(a.head)};
  }
  if (!a.train_disasters.empty()) c.train_disasters = a.train_disasters;
  if (!a.target.empty()) c.target_disaster = a.target;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.lr) c.lr = *a.lr;
  if (a.batch_nodes) c.batch_nodes = *a.batch_nodes;
  if (!a.fanout.empty()) {
    if (a.fanout == "all") {
      c.fanout = graph::kAllNeighbors;
    } else {
      try {
        c.fanout = std::stoul(a.fanout);
      } catch (const std::exception&) {
        throw Error(Errc::ConfigError, "--fanout expects a positive integer or 'all'");
      }
    }
  }
  if (!a.aggregation.empty()) c.model.head.aggregation = models::parse_aggregation(a.aggregation);
  if (!a.encoder_mode.empty()) c.encoder_mode = experiments::parse_encoder_mode(a.encoder_mode);
  if (a.leak_fraction) c.leak_fraction = *a.leak_fraction;
  experiments::validate(c);
}

std::vector<experiments::ExperimentConfig> resolve_configs(const Globals& g, const RunArgs& a) {
  std::vector<experiments::ExperimentConfig> configs;
  if (!a.suite.empty()) {
    if (a.suite != "standard") throw Error(Errc::ConfigError, "unknown suite '" + a.suite + "' (expected standard)");
    experiments::ExperimentConfig base;
    if (!a.config.empty()) base = experiments::experiment_list_from_json(read_json_file(a.config)).front();
    configs = experiments::standard_suite(base);
  } else if (!a.config.empty()) {
    configs = experiments::experiment_list_from_json(read_json_file(a.config));
  } else {
    if (a.target.empty() || a.train_disasters.empty()) {
      throw Error(Errc::ConfigError, "give --config, --suite, or both --train and --target");
    }
    experiments::ExperimentConfig c;
    c.name = "experiment";
    c.train_disasters = a.train_disasters;
    c.target_disaster = a.target;
    configs = {c};
  }
  for (auto& c : configs) apply_flags(c, g, a);
  for (std::size_t i = 1; i < configs.size(); ++i) {
    if (configs[i].encoder_mode != configs[0].encoder_mode || configs[i].seed != configs[0].seed ||
        models::to_json(configs[i].model)["encoder"] != models::to_json(configs[0].model)["encoder"]) {
      throw Error(Errc::ConfigError, "all experiments of one run must share encoder_mode, seed and encoder settings");
    }
  }
  if (configs[0].encoder_mode == experiments::EncoderMode::External && a.features_dir.empty()) {
    throw Error(Errc::ConfigError, "encoder mode 'external' requires --features-dir");
  }
  return configs;
}

std::vector<graph::ChipGraph> load_for(const std::vector<experiments::ExperimentConfig>& configs, const RunArgs& a,
                                       RunManifest& manifest) {
  const fs::path cache = a.cache.empty() ? default_cache_dir() : fs::path(a.cache);
  std::vector<std::string> disasters;
  for (const auto& c : configs) {
    disasters.insert(disasters.end(), c.train_disasters.begin(), c.train_disasters.end());
    disasters.push_back(c.target_disaster);
  }
  for (const auto& p : graph::list_cache(cache)) manifest.input(p);
  return experiments::load_corpus(cache, configs[0].encoder_mode, configs[0].model, configs[0].seed, a.features_dir,
                                  disasters);
}

int cmd_experiment(const Globals& g, const RunArgs& a) {
  const auto configs = resolve_configs(g, a);
  const fs::path out_dir = g.out.empty() ? fs::path("results") : fs::path(g.out);
  RunManifest manifest("experiment");
  json resolved = json::array();
  for (const auto& c : configs) resolved.push_back(experiments::to_json(c));
  manifest.config({{"experiments", resolved}, {"cache", a.cache}, {"features_dir", a.features_dir}});
  manifest.seed(configs[0].seed);
  const auto graphs = load_for(configs, a, manifest);
  note(g, "experiment: " + std::to_string(graphs.size()) + " chip graphs loaded");

  std::vector<experiments::ExperimentReport> reports;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    reports.push_back(experiments::run_experiment(graphs, configs[i], i + 1, [&](const std::string& s) { note(g, s); }));
  }
  const auto paths = experiments::write_reports(out_dir, reports);
  for (const auto& p : {paths.report_json, paths.table_csv, paths.gap_csv}) manifest.output(p);
  manifest.write(out_dir);
  std::cout << experiments::table_csv(reports);
  return 0;
}

int cmd_train(const Globals& g, const RunArgs& a) {
  auto configs = resolve_configs(g, a);
  if (configs.size() != 1) throw Error(Errc::ConfigError, "train takes exactly one experiment configuration");
  const auto& c = configs[0];
  const fs::path out_dir = g.out.empty() ? fs::path("model") : fs::path(g.out);
  fs::create_directories(out_dir);
  RunManifest manifest("train");
  manifest.config({{"experiment", experiments::to_json(c)}, {"cache", a.cache}, {"features_dir", a.features_dir}});
  manifest.seed(c.seed);
  const auto graphs = load_for(configs, a, manifest);

  const auto s = experiments::split(graphs, c);
  std::vector<const graph::ChipGraph*> train, test;
  for (std::size_t i : s.train) train.push_back(&graphs[i]);
  for (std::size_t i : s.test) test.push_back(&graphs[i]);
  const fs::path split_path = out_dir / "splits.json";
  io::write_text_atomic(split_path, experiments::split_manifest(graphs, s).dump(2) + "\n");
  manifest.output(split_path);

  for (auto head : c.heads) {
    models::ModelConfig mc = c.model;
    mc.head.kind = head;
    if (graphs.front().has_embeddings()) mc.encoder.feature_dim = graphs.front().embeddings.dim(1);
    experiments::Model model(mc, c.seed);
    experiments::FitOptions o;
    o.epochs = c.epochs;
    o.lr = c.lr;
    o.batch_nodes = c.batch_nodes;
    o.fanout = c.fanout;
    o.class_weighting = c.class_weighting;
    o.train_encoder = c.encoder_mode == experiments::EncoderMode::Train;
    o.seed = c.seed;
    const auto fit = experiments::fit(model, train, test, o, [&](const experiments::EpochLog& e) {
      note(g, std::string(models::head_name(head)) + " epoch " + std::to_string(e.epoch) + " loss " +
                  std::to_string(e.loss) + " test macro F1 " + metrics::format_metric(e.test_macro_f1));
    });
    const fs::path ckpt = out_dir / (std::string(experiments::model_key(head)) + ".rsnn");
    nn::save_checkpoint(ckpt, model.to_checkpoint());
    manifest.output(ckpt);
    note(g, "train: " + std::string(experiments::model_display_name(head)) + " best epoch " +
                std::to_string(fit.best_epoch) + " -> " + ckpt.string());
  }
  manifest.write(out_dir);
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string cache;
  std::string features_dir;
  std::string splits;
  std::string split;
  std::size_t batch_nodes = 256;
};

int cmd_evaluate(const Globals& g, const EvalArgs& a) {
  if (!a.split.empty() && a.splits.empty()) throw Error(Errc::ConfigError, "--split requires --splits");
  if (!a.splits.empty() && a.split.empty()) throw Error(Errc::ConfigError, "--splits requires --split");
  const fs::path out_dir = g.out.empty() ? fs::path("evaluation") : fs::path(g.out);
  RunManifest manifest("evaluate");
  manifest.config({{"checkpoint", a.checkpoint},
                   {"cache", a.cache},
                   {"features_dir", a.features_dir},
                   {"splits", a.splits},
                   {"split", a.split},
                   {"batch_nodes", a.batch_nodes}});
  manifest.seed(g.seed);
  manifest.input(a.checkpoint);
  const auto model = experiments::Model::from_checkpoint(nn::load_checkpoint(a.checkpoint));

  std::vector<std::string> keep;
  if (!a.splits.empty()) {
    manifest.input(a.splits);
    const json s = read_json_file(a.splits);
    if (!s.contains(a.split)) throw Error(Errc::ConfigError, "split '" + a.split + "' not in " + a.splits);
    keep = s.at(a.split).get<std::vector<std::string>>();
  }
  const fs::path cache = a.cache.empty() ? default_cache_dir() : fs::path(a.cache);
  const auto mode = a.features_dir.empty() ? experiments::EncoderMode::Train : experiments::EncoderMode::External;
  std::vector<graph::ChipGraph> graphs;
  for (auto& gr : experiments::load_corpus(cache, mode, model.config(), 0, a.features_dir)) {
    if (keep.empty() || std::find(keep.begin(), keep.end(), gr.chip_id) != keep.end()) graphs.push_back(std::move(gr));
  }
  for (const auto& p : graph::list_cache(cache)) manifest.input(p);
  std::vector<const graph::ChipGraph*> ptrs;
  for (const auto& gr : graphs) ptrs.push_back(&gr);
  const auto report = experiments::evaluate(model, ptrs, a.batch_nodes);
  json j = metrics::to_json(report);
  j["model"] = experiments::model_display_name(model.head_kind());
  j["chips"] = graphs.size();
  fs::create_directories(out_dir);
  const fs::path path = out_dir / "evaluation.json";
  io::write_text_atomic(path, j.dump(2) + "\n");
  manifest.output(path);
  manifest.write(out_dir);
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------- synth

struct SynthArgs {
  std::string config;
  std::optional<std::size_t> chips;
  std::optional<double> coupling;
};

int cmd_synth(const Globals& g, const SynthArgs& a) {
  synth::SynthConfig c;
  RunManifest manifest("synth");
  if (!a.config.empty()) {
    c = synth::synth_config_from_json(read_json_file(a.config));
    manifest.input(a.config);
  }
  if (a.chips) c.chips = *a.chips;
  if (a.coupling) c.coupling = *a.coupling;
  synth::validate(c);
  const fs::path out_dir = g.out.empty() ? fs::path("synth") : fs::path(g.out);
  manifest.config(synth::to_json(c));
  manifest.seed(g.seed);
  const auto rows = synth::write_corpus(c, g.seed, out_dir);
  for (const auto& r : rows) {
    manifest.output(out_dir / r.label_path);
    manifest.output(out_dir / r.pre_path);
    manifest.output(out_dir / r.post_path);
  }
  manifest.output(out_dir / "manifest.csv");
  manifest.write(out_dir);
  note(g, "synth: " + std::to_string(rows.size()) + " chips -> " + out_dir.string());
  return 0;
}

void add_run_options(CLI::App* cmd, RunArgs& a, bool with_suite) {
  cmd->add_option("--config", a.config, "Experiment config JSON (single object or {\"experiments\": [...]})")
      ->check(CLI::ExistingFile);
  if (with_suite) cmd->add_option("--suite", a.suite, "Built-in experiment list (standard)");
  cmd->add_option("--cache", a.cache, "Graph cache directory (default $RUINSCOPE_CACHE_DIR or ./cache)");
  cmd->add_option("--features-dir", a.features_dir, "Directory of <chip_id>.rsnf node features");
  cmd->add_option("--head", a.head, "Model head")->check(CLI::IsMember({"sage", "mlp", "both"}));
  cmd->add_option("--train", a.train_disasters, "Training disaster ids");
  cmd->add_option("--target", a.target, "Target (test/hold) disaster id");
  cmd->add_option("--epochs", a.epochs, "Training epochs");
  cmd->add_option("--lr", a.lr, "Adam learning rate");
  cmd->add_option("--batch-nodes", a.batch_nodes, "Target nodes per batch");
  cmd->add_option("--fanout", a.fanout, "Sampled neighbors per node, or 'all'");
  cmd->add_option("--aggregation", a.aggregation, "Neighbor mean")->check(CLI::IsMember({"weighted", "unweighted"}));
  cmd->add_option("--encoder-mode", a.encoder_mode, "Node features")
      ->check(CLI::IsMember({"train", "frozen", "external"}));
  cmd->add_option("--leak-fraction", a.leak_fraction, "Share of the target's training-side chips leaked into train");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ruinscope: graph-based building damage classification"};
  app.footer(
      "Settings precedence: command-line flags override config-file values, which override built-in defaults.\n"
      "RUINSCOPE_CACHE_DIR sets the default graph cache directory.");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  BuildGraphArgs bg;
  auto* build = app.add_subcommand("build-graph", "Ingest chips and write one graph cache file per kept chip");
  auto* manifest_opt = build->add_option("--manifest", bg.manifest, "Dataset manifest CSV")->check(CLI::ExistingFile);
  auto* xbd_opt = build->add_option("--xbd-dir", bg.xbd_dir, "xBD-layout directory (images/, labels/)")
                      ->check(CLI::ExistingDirectory);
  manifest_opt->excludes(xbd_opt);
  build->add_option("--limit", bg.limit, "Process at most this many chips");

  RunArgs train_args;
  auto* train = app.add_subcommand("train", "Train model(s) on one experiment's training split");
  add_run_options(train, train_args, false);

  EvalArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on cached graphs");
  evaluate->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint (.rsnn)")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--cache", eval_args.cache, "Graph cache directory");
  evaluate->add_option("--features-dir", eval_args.features_dir, "Directory of <chip_id>.rsnf node features");
  evaluate->add_option("--splits", eval_args.splits, "splits.json written by train")->check(CLI::ExistingFile);
  evaluate->add_option("--split", eval_args.split, "Split to score")->check(CLI::IsMember({"train", "test", "hold"}));
  evaluate->add_option("--batch-nodes", eval_args.batch_nodes, "Target nodes per batch")->check(CLI::PositiveNumber);

  RunArgs exp_args;
  auto* experiment = app.add_subcommand("experiment", "Run experiments and write metric tables and generalization gaps");
  add_run_options(experiment, exp_args, true);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic chip corpus");
  synth_cmd->add_option("--config", synth_args.config, "Synth config JSON")->check(CLI::ExistingFile);
  synth_cmd->add_option("--chips", synth_args.chips, "Number of chips");
  synth_cmd->add_option("--coupling", synth_args.coupling, "Neighborhood coupling strength");

  CLI11_PARSE(app, argc, argv);

  try {
    kernels::parallel::set_threads(static_cast<int>(g.jobs));
    if (*build) {
      if (bg.manifest.empty() && bg.xbd_dir.empty()) throw Error(Errc::ConfigError, "give --manifest or --xbd-dir");
      return cmd_build_graph(g, bg);
    }
    if (*train) return cmd_train(g, train_args);
    if (*evaluate) return cmd_evaluate(g, eval_args);
    if (*experiment) return cmd_experiment(g, exp_args);
    if (*synth_cmd) return cmd_synth(g, synth_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == Errc::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
