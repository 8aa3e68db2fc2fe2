#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "ctrlsum/error.hpp"
#include "ctrlsum/kernels.hpp"
#include "ctrlsum/pipeline.hpp"

namespace {

struct Flag {
  std::string name;
  std::string key;
  std::string help;
};

// Per-command flags and the configuration keys they set.
const std::map<std::string, std::vector<Flag>>& command_flags() {
  static const std::map<std::string, std::vector<Flag>> flags = {
      {"build-oracle",
       {{"--metric", "oracle.metric", "semantic|lexical"}, {"--threshold", "oracle.threshold", "minimum recall"}}},
      {"label-subaspects",
       {{"--k-mode", "subaspects.k_mode", "oracle|fixed"},
        {"--k", "subaspects.k", "importance k when not taken from the oracle"},
        {"--projection-dim", "subaspects.projection_dim", "PCA dimensions for the hull"}}},
      {"train-autoencoder",
       {{"--lambda", "autoencoder.lambda", "adversarial penalty weight"},
        {"--epochs", "autoencoder.epochs", "maximum epochs"},
        {"--hidden", "autoencoder.hidden", "encoder/decoder hidden width"},
        {"--latent", "autoencoder.latent", "latent width"}}},
      {"cluster", {{"--k", "cluster.k", "number of clusters"}}},
      {"augment", {}},
      {"train-selector",
       {{"--epochs", "selector.epochs", "training epochs"},
        {"--hidden", "selector.hidden", "LSTM hidden size per direction"},
        {"--lr", "selector.lr", "learning rate"}}},
      {"summarize",
       {{"--code", "summarize.code", "control code [importance, diversity, position], e.g. 101"},
        {"--top-k", "summarize.top_k", "sentences per summary"}}},
      {"evaluate",
       {{"--codes", "evaluate.codes", "comma-separated control codes"},
        {"--top-k", "summarize.top_k", "sentences per summary"}}},
      {"shuffle-exp",
       {{"--codes", "shuffle.codes", "comma-separated control codes"},
        {"--shuffle-seed", "shuffle.seed", "permutation seed"}}},
      {"cross-domain",
       {{"--codes", "evaluate.codes", "comma-separated control codes"},
        {"--foreign", "corpus.foreign", "out-of-domain corpus"}}},
      {"report", {}},
      {"pipeline", {}},
  };
  return flags;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Controllable extractive summarization toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::map<std::string, std::string> global_values;
  app.add_option("--config", config_path, "INI configuration file");
  const std::vector<Flag> globals = {{"--output-dir", "run.output_dir", "artifact directory"},
                                     {"--seed", "run.seed", "master seed"},
                                     {"--provider", "provider.spec", "hash:<dim>:<seed> or file:<path>"},
                                     {"--split", "run.split", "train|val|test"}};
  for (const auto& f : globals) app.add_option(f.name, global_values[f.key], f.help);
  std::string corpus_path;
  app.add_option("--corpus", corpus_path, "corpus JSONL for the selected split");
  bool force = false;
  app.add_flag("--force", force, "combine artifacts from different config hashes");
  std::string simd;
  app.add_option("--simd", simd, "kernel backend: scalar|avx2|neon");

  std::map<std::string, std::map<std::string, std::string>> command_values;
  std::map<std::string, bool> no_trigram;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, flags] : command_flags()) {
    auto* sub = app.add_subcommand(name, name == "pipeline" ? "run every stage in order" : "run the " + name + " stage");
    for (const auto& f : flags) sub->add_option(f.name, command_values[name][f.key], f.help);
    if (name == "summarize" || name == "evaluate" || name == "shuffle-exp" || name == "cross-domain") {
      sub->add_flag("--no-trigram-block", no_trigram[name], "disable trigram blocking");
    }
    subs[name] = sub;
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (!simd.empty()) ctrlsum::kernels::set_backend(ctrlsum::kernels::parse_backend(simd));
    ctrlsum::PipelineConfig config;
    if (!config_path.empty()) config.load_ini(config_path);
    config.apply_environment();
    for (const auto& f : globals) {
      if (app.get_option(f.name)->count() == 0) continue;
      const auto& v = global_values[f.key];
      config.set(f.key, f.key == "run.output_dir" ? std::filesystem::absolute(v).string() : v);
    }
    if (force) config.set("run.force", "true");

    std::string command;
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) command = name;
    }
    for (const auto& f : command_flags().at(command)) {
      if (subs[command]->get_option(f.name)->count() == 0) continue;
      const auto& v = command_values[command][f.key];
      config.set(f.key, f.key == "corpus.foreign" ? std::filesystem::absolute(v).string() : v);
    }
    if (no_trigram[command]) config.set("summarize.trigram_block", "false");
    if (!corpus_path.empty()) {
      std::string split = config.get("run.split");
      if (split.empty()) {
        split = (command == "build-oracle" || command == "label-subaspects" || command == "train-autoencoder" ||
                 command == "cluster" || command == "augment" || command == "train-selector")
                    ? "train"
                    : command == "cross-domain" ? "foreign" : "test";
      }
      if (split == "val" || split == "validation") split = "train";
      config.set("corpus." + split, std::filesystem::absolute(corpus_path).string());
    }

    if (command == "pipeline") {
      ctrlsum::run_pipeline(config, std::cout);
    } else {
      ctrlsum::run_command(command, config, std::cout);
    }
  } catch (const ctrlsum::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
