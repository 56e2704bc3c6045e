#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ruinscope/binary_io.hpp"
#include "ruinscope/synth.hpp"
#include "support.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ruinscope;

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

Run run(const std::string& args, const fs::path& work) {
  const fs::path out = work / "stdout.txt";
  const fs::path err = work / "stderr.txt";
  const std::string cmd = std::string(RUINSCOPE_CLI) + " --quiet " + args + " > " + out.string() + " 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = io::read_text(out);
  r.err = io::read_text(err);
  return r;
}

fs::path write_synth_config(const fs::path& dir, std::size_t chips) {
  synth::SynthConfig c;
  c.chips = chips;
  c.min_buildings = 3;
  c.max_buildings = 6;
  c.disasters = {{"src-fire", "fire"}, {"dst-fire", "fire"}};
  const fs::path path = dir / "synth.json";
  io::write_text_atomic(path, synth::to_json(c).dump());
  return path;
}

std::vector<fs::path> cache_files(const fs::path& dir) { return graph::list_cache(dir); }

TEST(Cli, SynthIsDeterministic) {
  const auto dir = testing_support::temp_dir("cli_synth");
  const auto cfg = write_synth_config(dir, 3);
  ASSERT_EQ(run("--seed 4 --out " + (dir / "a").string() + " synth --config " + cfg.string(), dir).status, 0);
  ASSERT_EQ(run("--seed 4 --out " + (dir / "b").string() + " synth --config " + cfg.string(), dir).status, 0);
  for (const auto* rel : {"manifest.csv", "images/src-fire_00000_pre.png", "images/dst-fire_00001_post.png",
                          "labels/src-fire_00002.json"}) {
    EXPECT_EQ(io::read_file(dir / "a" / rel), io::read_file(dir / "b" / rel)) << rel;
  }
  const auto m = nlohmann::json::parse(io::read_text(dir / "a" / "run_manifest.json"));
  EXPECT_EQ(m["command"], "synth");
  EXPECT_EQ(m["seed"], 4);
  EXPECT_TRUE(m.contains("version"));
}

TEST(Cli, BuildGraphFiltersSingleBuildingChips) {
  const auto dir = testing_support::temp_dir("cli_single");
  const auto cfg = write_synth_config(dir, 4);
  ASSERT_EQ(run("--out " + (dir / "corpus").string() + " synth --config " + cfg.string(), dir).status, 0);
  for (const auto& row : ingest::read_manifest(dir / "corpus" / "manifest.csv")) {
    auto j = nlohmann::json::parse(io::read_text(dir / "corpus" / row.label_path));
    j["buildings"] = nlohmann::json::array({j["buildings"][0]});
    io::write_text_atomic(dir / "corpus" / row.label_path, j.dump());
  }
  const auto r = run("--out " + (dir / "cache").string() + " build-graph --manifest " +
                         (dir / "corpus" / "manifest.csv").string(),
                     dir);
  EXPECT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(cache_files(dir / "cache").empty());
  const std::string log = io::read_text(dir / "cache" / "filter_log.csv");
  std::size_t lines = 0;
  for (char c : log) lines += c == '\n';
  EXPECT_EQ(lines, 5u);
  EXPECT_NE(log.find(std::string(ingest::filter_reason_name(ingest::FilterReason::OnlyOneBuilding))),
            std::string::npos);
}

class CliCorpus : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(testing_support::temp_dir("cli_corpus"));
    const auto cfg = write_synth_config(*dir_, 20);
    ASSERT_EQ(run("--seed 2 --out " + (*dir_ / "corpus").string() + " synth --config " + cfg.string(), *dir_).status,
              0);
    const auto r = run("--jobs 2 --out " + (*dir_ / "cache").string() + " build-graph --manifest " +
                           (*dir_ / "corpus" / "manifest.csv").string(),
                       *dir_);
    ASSERT_EQ(r.status, 0) << r.err;
  }
  static void TearDownTestSuite() { delete dir_; }
  static fs::path* dir_;
  static std::string cache() { return (*dir_ / "cache").string(); }
};
fs::path* CliCorpus::dir_ = nullptr;

TEST_F(CliCorpus, RebuildIsBitwiseIdentical) {
  const auto r = run("--jobs 1 --out " + (*dir_ / "cache2").string() + " build-graph --manifest " +
                         (*dir_ / "corpus" / "manifest.csv").string(),
                     *dir_);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto a = cache_files(*dir_ / "cache");
  const auto b = cache_files(*dir_ / "cache2");
  ASSERT_EQ(a.size(), 20u);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].filename(), b[i].filename());
    EXPECT_EQ(io::read_file(a[i]), io::read_file(b[i]));
  }
}

TEST_F(CliCorpus, CorruptImageFailsOnlyThatChip) {
  const auto work = *dir_ / "corrupt";
  fs::create_directories(work);
  auto rows = ingest::read_manifest(*dir_ / "corpus" / "manifest.csv");
  rows.resize(10);
  const fs::path bad = work / "broken_post.png";
  io::write_text_atomic(bad, "this is not a png");
  rows[4].post_path = bad;
  io::write_text_atomic(work / "manifest.csv", ingest::format_manifest(rows));
  const auto r = run("--out " + (work / "cache").string() + " build-graph --manifest " +
                         (work / "manifest.csv").string(),
                     work);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find(rows[4].chip_id), std::string::npos);
  EXPECT_NE(r.err.find("broken_post.png"), std::string::npos);
  EXPECT_EQ(cache_files(work / "cache").size(), 9u);
}

TEST_F(CliCorpus, ExperimentBothHeadsTable) {
  const auto out = *dir_ / "exp";
  const auto r = run("--out " + out.string() + " experiment --cache " + cache() +
                         " --train src-fire --target dst-fire --head both --epochs 2 --encoder-mode frozen",
                     *dir_);
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header,
            "experiment_index,train,test_hold,split,"
            "Siamese CNN Acc,Siamese CNN Macro F1,Siamese CNN Weighted F1,Siamese CNN AUC,"
            "Graph SAGE Acc,Graph SAGE Macro F1,Graph SAGE Weighted F1,Graph SAGE AUC");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(io::read_text(out / "table.csv"), r.out);
  EXPECT_TRUE(fs::exists(out / "gaps.csv"));
  const auto m = nlohmann::json::parse(io::read_text(out / "run_manifest.json"));
  EXPECT_FALSE(m["inputs"].empty());
  EXPECT_EQ(m["outputs"].size(), 3u);
}

TEST_F(CliCorpus, TrainThenEvaluateIsRepeatable) {
  const auto model = *dir_ / "model";
  auto r = run("--out " + model.string() + " train --cache " + cache() +
                   " --train src-fire --target dst-fire --head sage --epochs 2 --encoder-mode frozen",
               *dir_);
  ASSERT_EQ(r.status, 0) << r.err;
  ASSERT_TRUE(fs::exists(model / "graph_sage.rsnn"));
  const std::string eval = "evaluate --checkpoint " + (model / "graph_sage.rsnn").string() + " --cache " + cache() +
                           " --splits " + (model / "splits.json").string() + " --split hold";
  r = run("--out " + (*dir_ / "e1").string() + " " + eval, *dir_);
  ASSERT_EQ(r.status, 0) << r.err;
  r = run("--out " + (*dir_ / "e2").string() + " " + eval, *dir_);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto a = io::read_text(*dir_ / "e1" / "evaluation.json");
  EXPECT_EQ(a, io::read_text(*dir_ / "e2" / "evaluation.json"));
  const auto j = nlohmann::json::parse(a);
  EXPECT_EQ(j["model"], "Graph SAGE");
  const auto splits = nlohmann::json::parse(io::read_text(model / "splits.json"));
  EXPECT_EQ(j["chips"], splits["hold"].size());
}

TEST_F(CliCorpus, InvalidInvocationsRejected) {
  const std::string base = "experiment --cache " + cache() + " --train src-fire --target dst-fire ";
  EXPECT_NE(run(base + "--head gcn", *dir_).status, 0);
  EXPECT_EQ(run(base + "--fanout many", *dir_).status, 2);
  EXPECT_EQ(run(base + "--leak-fraction 1.5", *dir_).status, 2);
  EXPECT_EQ(run(base + "--encoder-mode external", *dir_).status, 2);
  EXPECT_EQ(run("experiment --cache " + cache(), *dir_).status, 2);
  EXPECT_EQ(run("experiment --suite nonsense --cache " + cache(), *dir_).status, 2);
  EXPECT_NE(run("frobnicate", *dir_).status, 0);
  EXPECT_NE(run("build-graph", *dir_).status, 0);
  EXPECT_NE(run(base + "--target nowhere --epochs 1 --encoder-mode frozen", *dir_).status, 0);
}

}  // namespace
