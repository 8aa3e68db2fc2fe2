#pragma once

// Extractive oracle construction from abstractive references.
//
// Gold sentences are processed in document order. For each one, every source
// sentence not already chosen is scored against it and the best-scoring one is
// taken (ties go to the lower source index). A source sentence can be chosen at
// most once, so |selected| <= number of gold sentences.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ctrlsum/corpus.hpp"
#include "ctrlsum/embeddings.hpp"

namespace ctrlsum {

struct MatchScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Token-level greedy cosine matching. recall is the mean, over reference
/// tokens, of the best cosine similarity to any candidate token; precision is
/// the same with the roles swapped. Zero vectors never match (similarity 0).
/// Both values are clamped to [0, 1]. Throws Error on an empty matrix or a
/// dimension mismatch.
MatchScore greedy_match_score(const TokenEmbeddings& candidate, const TokenEmbeddings& reference);

enum class OracleMetric { Semantic, Lexical };

std::string_view metric_name(OracleMetric metric);
OracleMetric parse_metric(std::string_view name);

struct AlignmentPair {
  std::size_t gold_index = 0;
  std::size_t source_index = 0;
  MatchScore score;
};

struct OracleAlignment {
  std::string doc_id;
  std::vector<AlignmentPair> pairs;
  /// Sorted, unique source indices.
  std::vector<std::size_t> selected;
  OracleMetric metric = OracleMetric::Semantic;
};

inline constexpr double kDefaultOracleThreshold = 0.5;

/// Candidates whose recall against the gold sentence is below `threshold` are
/// excluded (a recall equal to the threshold is kept). A gold sentence with no
/// surviving candidate contributes nothing.
OracleAlignment build_semantic_oracle(const Document& doc, const DocumentEmbeddings& embeddings,
                                      double threshold = kDefaultOracleThreshold);

/// Score = mean of ROUGE-1 and ROUGE-2 recall of the candidate against the gold
/// sentence; ROUGE-2 is dropped when either side has fewer than two tokens.
/// No threshold, but a candidate sharing nothing with the gold sentence
/// (score 0) is never selected.
OracleAlignment build_lexical_oracle(const Document& doc);

/// Cumulative fraction of selected sentences by relative position
/// index / doc_length, over `bins` equal-width bins. The last entry is 1.
std::vector<double> oracle_position_cdf(std::span<const OracleAlignment> alignments, const Corpus& corpus,
                                        std::size_t bins = 10);

struct OracleFileInfo {
  std::string provider;
  double threshold = kDefaultOracleThreshold;
  std::string config_hash;
};

/// JSONL: {"id", "selected", "pairs": [[g, s, p, r, f1]], "metric", "provider",
/// "threshold", "gold_order", "config_hash"}.
void write_oracle_jsonl(std::ostream& out, std::span<const OracleAlignment> alignments,
                        const OracleFileInfo& info);
std::vector<OracleAlignment> read_oracle_jsonl(std::istream& in);

}  // namespace ctrlsum
