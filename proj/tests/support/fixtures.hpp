#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctrlsum/corpus.hpp"
#include "ctrlsum/rng.hpp"

namespace fixture {

/// A sentence of `length` words drawn from a small vocabulary.
std::string random_sentence(ctrlsum::Rng& rng, std::size_t length, std::size_t vocabulary = 30);

/// Document with `n` random sentences and `gold` summary sentences, each
/// summary sentence a perturbed copy of a random source sentence.
ctrlsum::Document random_document(ctrlsum::Rng& rng, const std::string& id, std::size_t n, std::size_t gold);

/// Sentence made of fresh words never produced by random_sentence.
std::string unique_sentence(ctrlsum::Rng& rng, std::size_t length);

/// Unique temporary directory, removed by the destructor.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace fixture
