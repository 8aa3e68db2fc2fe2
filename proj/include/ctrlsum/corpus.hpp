#pragma once

// Documents, reference summaries, and the JSONL interchange format:
//
//   {"id": "d1", "sentences": ["A b.", "C d."], "summary": ["A b."]}
//
// one object per line, UTF-8. "summary" is optional; an absent, null or empty
// list means the document has no gold summary. Sentences arrive pre-segmented
// and are never truncated.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctrlsum {

enum class Split { Train, Validation, Test };

/// Accepts "train", "val"/"validation", "test".
Split parse_split(std::string_view name);
std::string_view split_name(Split split);

struct Sentence {
  std::size_t index = 0;
  std::string text;
  std::vector<std::string> tokens;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Document {
  std::string id;
  std::vector<Sentence> sentences;
  std::optional<std::vector<Sentence>> gold;

  std::size_t size() const noexcept { return sentences.size(); }
  bool has_gold() const noexcept { return gold.has_value() && !gold->empty(); }

  friend bool operator==(const Document&, const Document&) = default;
};

struct Corpus {
  std::vector<Document> documents;
  Split split = Split::Train;

  const Document* find(std::string_view id) const;
  std::size_t size() const noexcept { return documents.size(); }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Lowercases ASCII letters, splits on whitespace, and emits every ASCII
/// punctuation character as its own token. Bytes >= 0x80 are word characters.
std::vector<std::string> tokenize(std::string_view text);

/// Builds a document with contiguous indices and tokenized sentences.
Document make_document(std::string id, const std::vector<std::string>& sentences,
                       const std::optional<std::vector<std::string>>& summary = std::nullopt);

Corpus load_corpus(const std::filesystem::path& path, Split split);
Corpus read_corpus(std::istream& in, Split split);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, std::ostream& out);

/// Seeded permutation of 0..n-1: result[new_position] = old_position.
/// Fisher-Yates driven by ctrlsum::Rng(seed).
std::vector<std::size_t> shuffle_permutation(std::size_t n, std::uint64_t seed);

/// Reorders the source sentences by shuffle_permutation and re-indexes them.
/// The gold summary is left as is.
Document shuffle_document(const Document& doc, std::uint64_t seed);

}  // namespace ctrlsum
