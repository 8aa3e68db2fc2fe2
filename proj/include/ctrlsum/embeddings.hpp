#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctrlsum/corpus.hpp"
#include "ctrlsum/matrix.hpp"

namespace ctrlsum {

/// tokens x dimension, one row per token.
using TokenEmbeddings = Matrix;
using SentenceVector = Vector;
using DocumentVector = Vector;

enum class ProviderSource { VectorFile, DeterministicHash };

/// Source of token vectors. Implementations are immutable after construction
/// and deterministic for fixed inputs, so concurrent lookups are safe.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual const std::string& name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual ProviderSource source() const = 0;

  /// Throws Error on an empty token list.
  TokenEmbeddings embed_tokens(std::span<const std::string> tokens) const;

 protected:
  virtual void embed_token(std::string_view token, std::span<double> out) const = 0;
};

/// Every token maps to a unit vector derived from a seeded hash:
///
///   state = fnv1a64(token) XOR splitmix64(seed)
///   x_j   = 2 * (splitmix64(state) >> 11) * 2^-53 - 1     for j = 0..d-1
///
/// followed by normalization to unit length (SplitMix64 advances `state` once
/// per component). Collisions require a 64-bit FNV-1a collision.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  HashEmbeddingProvider(std::size_t dimension, std::uint64_t seed);

  const std::string& name() const override { return name_; }
  std::size_t dimension() const override { return dimension_; }
  ProviderSource source() const override { return ProviderSource::DeterministicHash; }
  std::uint64_t seed() const noexcept { return seed_; }

 protected:
  void embed_token(std::string_view token, std::span<double> out) const override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
  std::string name_;
};

/// Precomputed vectors loaded from disk.
///
/// Text format: a header line "dim=<d> count=<n>", then n lines of
/// "<token> <v_1> ... <v_d>". Binary format (selected by the ".bin" extension):
/// the same header line, then n records of "<token> " followed by d
/// little-endian float32 values and a '\n'. Out-of-vocabulary tokens map to the
/// zero vector, which scores 0 against everything under cosine similarity.
class VectorFileProvider final : public EmbeddingProvider {
 public:
  static VectorFileProvider load(const std::filesystem::path& path);

  const std::string& name() const override { return name_; }
  std::size_t dimension() const override { return table_.cols(); }
  ProviderSource source() const override { return ProviderSource::VectorFile; }
  bool contains(std::string_view token) const;
  std::size_t vocabulary_size() const noexcept { return table_.rows(); }

 protected:
  void embed_token(std::string_view token, std::span<double> out) const override;

 private:
  VectorFileProvider() = default;

  std::string name_;
  std::unordered_map<std::string, std::size_t> index_;
  Matrix table_;
};

/// "hash:<dim>:<seed>" or "file:<path>".
std::unique_ptr<EmbeddingProvider> make_provider(std::string_view spec);

/// Mean of the token rows.
SentenceVector sentence_vector(const TokenEmbeddings& tokens);
/// Mean of the sentence vectors.
DocumentVector document_vector(std::span<const SentenceVector> sentences);

struct DocumentEmbeddings {
  std::vector<TokenEmbeddings> source;
  std::vector<TokenEmbeddings> gold;

  std::vector<SentenceVector> source_vectors() const;

  friend bool operator==(const DocumentEmbeddings&, const DocumentEmbeddings&) = default;
};

DocumentEmbeddings embed_document(const EmbeddingProvider& provider, const Document& doc);

/// Content-addressed store of corpus embeddings keyed by
/// (provider name, corpus id, split). Entries hold raw doubles, so a cache hit
/// is bit-identical to the computation that filled it.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path directory);

  std::filesystem::path entry_path(const EmbeddingProvider& provider, std::string_view corpus_id,
                                   Split split) const;

  /// Returns cached embeddings when present and consistent with the corpus,
  /// otherwise computes, stores, and returns them.
  std::vector<DocumentEmbeddings> embed_corpus(const EmbeddingProvider& provider, const Corpus& corpus,
                                               std::string_view corpus_id);

  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  std::filesystem::path directory_;
  std::mutex write_mutex_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace ctrlsum
