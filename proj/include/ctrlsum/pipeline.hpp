#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ctrlsum/autoencoder.hpp"
#include "ctrlsum/corpus.hpp"
#include "ctrlsum/selector.hpp"
#include "ctrlsum/subaspects.hpp"

namespace ctrlsum {

/// Flat "section.key" -> value settings with documented defaults. Values come
/// from, in increasing priority: defaults, an INI file, CTRLSUM_<SECTION>_<KEY>
/// environment variables, explicit set() calls (command-line flags).
class PipelineConfig {
 public:
  PipelineConfig();

  /// Throws Error for keys that are not part of the schema.
  void set(const std::string& key, std::string value);
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// Path value, resolved against the config file's directory when relative.
  std::filesystem::path get_path(const std::string& key) const;

  void load_ini(const std::filesystem::path& path);
  void apply_environment();

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  /// FNV-1a over the sorted model-defining settings (corpus, provider, oracle,
  /// subaspects, autoencoder, cluster, selector, run.seed), as 16 hex digits.
  std::string hash() const;

  AETrainConfig autoencoder_config() const;
  SelTrainConfig selector_config() const;
  std::filesystem::path output_dir() const { return get_path("run.output_dir"); }
  std::uint64_t seed() const { return get_u64("run.seed"); }

  static std::string env_name(const std::string& key);
  static const std::vector<std::string>& keys();

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

inline constexpr std::string_view kCommands[] = {
    "build-oracle", "label-subaspects", "train-autoencoder", "cluster",     "augment", "train-selector",
    "summarize",    "evaluate",         "shuffle-exp",       "cross-domain", "report"};

/// Runs one stage, writing artifacts and manifest.<command>.json under the
/// output directory. Throws MissingArtifactError when an upstream artifact is
/// absent and Error for any other contract violation.
void run_command(std::string_view command, const PipelineConfig& config, std::ostream& log);

/// All stages in order on the configured splits.
void run_pipeline(const PipelineConfig& config, std::ostream& log);

}  // namespace ctrlsum
