#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "ctrlsum/error.hpp"
#include "ctrlsum/pipeline.hpp"
#include "fixtures.hpp"

using namespace ctrlsum;
namespace fs = std::filesystem;

namespace {
const fs::path kData = CTRLSUM_DATA_DIR;

struct Run {
  int status;
  std::string output;
};

Run cli(const std::string& args, const fs::path& out_dir, const std::string& env = "") {
  const auto log = out_dir.parent_path() / (out_dir.filename().string() + ".log");
  const std::string cmd = env + " '" + std::string(CTRLSUM_CLI) + "' --config '" + (kData / "toy.conf").string() +
                          "' --output-dir '" + out_dir.string() + "' " + args + " > '" + log.string() + "' 2>&1";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, fixture::read_file(log)};
}

PipelineConfig toy_config(const fs::path& out_dir) {
  PipelineConfig c;
  c.load_ini(kData / "toy.conf");
  c.set("run.output_dir", out_dir.string());
  return c;
}
}  // namespace

TEST_CASE("config defaults, INI values and overrides") {
  PipelineConfig c;
  CHECK(c.get("oracle.threshold") == "0.5");
  CHECK(c.get_size("cluster.k") == 5);
  CHECK(c.get_size("selector.hidden") == 384);
  CHECK(c.get("summarize.code") == "101");
  CHECK_THROWS_AS(c.set("oracle.nope", "1"), Error);
  CHECK_THROWS_AS(c.get("nope.nope"), Error);

  c.load_ini(kData / "toy.conf");
  CHECK(c.get("provider.spec") == "hash:64:0");
  CHECK(c.get_path("corpus.train") == kData / "toy_train.jsonl");
  CHECK(c.get_size("selector.hidden") == 32);

  setenv("CTRLSUM_SELECTOR_HIDDEN", "12", 1);
  c.apply_environment();
  unsetenv("CTRLSUM_SELECTOR_HIDDEN");
  CHECK(c.selector_config().hidden == 12);
  CHECK(PipelineConfig::env_name("autoencoder.lambda") == "CTRLSUM_AUTOENCODER_LAMBDA");

  const auto before = c.hash();
  c.set("summarize.code", "010");
  CHECK(c.hash() == before);
  c.set("run.seed", "1");
  CHECK(c.hash() != before);

  fixture::TempDir dir;
  {
    std::ofstream bad(dir / "bad.conf");
    bad << "[oracle]\nunknown = 3\n";
  }
  PipelineConfig d;
  CHECK_THROWS_AS(d.load_ini(dir / "bad.conf"), Error);
}

TEST_CASE("stages report missing upstream artifacts") {
  fixture::TempDir dir;
  const auto c = toy_config(dir.path());
  std::ostringstream log;
  CHECK_THROWS_AS(run_command("summarize", c, log), MissingArtifactError);
  CHECK_THROWS_AS(run_command("cluster", c, log), MissingArtifactError);
  CHECK_THROWS_AS(run_command("train-selector", c, log), MissingArtifactError);
  CHECK_THROWS_AS(run_command("report", c, log), MissingArtifactError);
  CHECK_THROWS_AS(run_command("nope", c, log), Error);
}

TEST_CASE("CLI exit codes") {
  fixture::TempDir dir;
  auto r = cli("summarize", dir / "out");
  CHECK(r.status == 2);
  CHECK(r.output.find("selector.ckpt") != std::string::npos);
  r = cli("build-oracle --threshold 2.5", dir / "out");
  CHECK(r.status == 1);
  r = cli("no-such-command", dir / "out");
  CHECK(r.status != 0);
  r = cli("build-oracle", dir / "out");
  CHECK(r.status == 0);
  CHECK(fs::exists(dir / "out" / "oracle.train.jsonl"));
  CHECK(fs::exists(dir / "out" / "manifest.build-oracle.json"));
}

TEST_CASE("full toy pipeline through the CLI") {
  fixture::TempDir dir;
  const auto out = dir / "out";
  for (const char* stage : {"build-oracle", "label-subaspects", "train-autoencoder", "cluster", "augment",
                            "train-selector", "summarize --code 010", "evaluate", "shuffle-exp", "cross-domain",
                            "report"}) {
    const auto r = cli(stage, out);
    INFO(stage << ": " << r.output);
    REQUIRE(r.status == 0);
  }
  for (const char* name : {"oracle.train.jsonl", "labels.train.jsonl", "autoencoder.ckpt", "clusters.jsonl",
                           "augmented.train.jsonl", "selector.ckpt", "summaries.test.010.jsonl", "eval.test.json",
                           "eval.test.txt", "shuffle.test.json", "crossdomain.json", "report.txt"}) {
    CHECK_MESSAGE(fs::exists(out / name), name);
  }
  const auto summaries = fixture::read_file(out / "summaries.test.010.jsonl");
  CHECK(std::count(summaries.begin(), summaries.end(), '\n') == 8);
  CHECK(fixture::read_file(out / "eval.test.txt").find("no stemming") != std::string::npos);

  // A selector retrained under another seed leaves mixed config hashes behind.
  REQUIRE(cli("--seed 5 train-selector", out).status == 0);
  auto r = cli("report", out);
  CHECK(r.status == 1);
  CHECK(r.output.find("different config hashes") != std::string::npos);
  CHECK(cli("--force report", out).status == 0);
}

TEST_CASE("flags and environment variables reach the stages") {
  fixture::TempDir dir;
  const auto out = dir / "out";
  REQUIRE(cli("build-oracle", out).status == 0);
  REQUIRE(cli("label-subaspects --k-mode fixed --k 2", out).status == 0);
  const auto labels = fixture::read_file(out / "labels.train.jsonl");
  CHECK(labels.find("\"k\":2") != std::string::npos);
  REQUIRE(cli("train-autoencoder", out, "CTRLSUM_AUTOENCODER_EPOCHS=1 CTRLSUM_AUTOENCODER_PATIENCE=0").status == 0);
  const auto manifest = fixture::read_file(out / "manifest.train-autoencoder.json");
  CHECK(manifest.find("\"autoencoder.epochs\": \"1\"") != std::string::npos);
}
