#pragma once

#include <array>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ctrlsum/corpus.hpp"
#include "ctrlsum/embeddings.hpp"
#include "ctrlsum/rouge.hpp"
#include "ctrlsum/selector.hpp"
#include "ctrlsum/subaspects.hpp"

namespace ctrlsum {

inline constexpr std::size_t kDefaultHistogramBins = 10;

/// Sentence vectors per document, aligned with Corpus::documents.
using CorpusVectors = std::vector<std::vector<SentenceVector>>;

CorpusVectors corpus_sentence_vectors(std::span<const DocumentEmbeddings> embeddings);

struct SystemSummary {
  std::string doc_id;
  std::vector<std::size_t> selected;
};

struct RougeScore {
  RougeComponent rouge1;
  RougeComponent rouge2;
};

struct DocumentScore {
  std::string doc_id;
  RougeScore rouge;
};

struct AspectMappingCounts {
  std::array<std::size_t, 3> at_least_one{};  // indexed by Aspect
  std::array<std::size_t, 3> at_least_two{};
  std::size_t total = 0;
};

struct EvaluationReport {
  std::string system;
  std::optional<ControlCode> code;
  RougeScore mean;
  std::vector<double> histogram;
  std::optional<AspectMappingCounts> mapping;
  std::size_t samples = 0;
  std::vector<DocumentScore> per_document;  // sorted by doc id
};

/// Candidate = selected sentences' tokens in document order, scored against
/// the gold tokens. Means are taken over documents sorted by id. Throws Error
/// for unknown ids, empty input, or documents without gold.
EvaluationReport evaluate_system(std::span<const SystemSummary> summaries, const Corpus& corpus,
                                 std::string system = "system", std::optional<ControlCode> code = std::nullopt,
                                 std::size_t bins = kDefaultHistogramBins);

/// Proportion of selected sentences per relative-position bin
/// (bin = index * bins / n). All zeros when nothing is selected.
std::vector<double> position_histogram(std::span<const SystemSummary> summaries, const Corpus& corpus,
                                       std::size_t bins = kDefaultHistogramBins);

/// For each aspect, the number of summaries with at least one and at least two
/// selected sentences in that aspect's subset. Throws Error when a summary has
/// no aspect sets.
AspectMappingCounts aspect_mapping_report(std::span<const SystemSummary> summaries,
                                          std::span<const DocumentLabels> aspect_sets);

/// Per-sentence scoring function, e.g. a trained selector.
using SentenceScorer = std::function<std::vector<ScoredSentence>(std::span<const SentenceVector>, ControlCode)>;

SentenceScorer selector_scorer(const SelectorParams& params);

struct ExtractionOptions {
  std::size_t top_k = kDefaultTopK;
  bool trigram_blocking = true;
};

std::vector<SystemSummary> summarize_corpus(const SentenceScorer& scorer, const Corpus& corpus,
                                            const CorpusVectors& vectors, ControlCode code,
                                            const ExtractionOptions& options = {});

/// Seed used to shuffle one document in the shuffle experiment.
std::uint64_t document_shuffle_seed(std::uint64_t seed, std::string_view doc_id);

struct ShuffleRow {
  ControlCode code;
  EvaluationReport in_order;
  EvaluationReport shuffled;
  RougeScore delta;  // shuffled minus in-order, component-wise
};

struct ShuffleReport {
  std::uint64_t seed = 0;
  std::vector<ShuffleRow> rows;
};

/// Evaluates every code on the in-order corpus and on a copy whose documents
/// (and sentence vectors) are permuted with document_shuffle_seed.
ShuffleReport shuffle_experiment(const SentenceScorer& scorer, const Corpus& corpus, const CorpusVectors& vectors,
                                 std::span<const ControlCode> codes, std::uint64_t seed,
                                 const ExtractionOptions& options = {});

/// One report per code on a corpus the model was not trained on. Throws Error
/// naming the documents that lack gold summaries.
std::vector<EvaluationReport> cross_domain_inference(const SentenceScorer& scorer, const Corpus& corpus,
                                                     const CorpusVectors& vectors, std::span<const ControlCode> codes,
                                                     const ExtractionOptions& options = {});

/// Disclosed at the top of every text report.
std::string report_preamble();

nlohmann::json report_json(const EvaluationReport& report);
nlohmann::json shuffle_json(const ShuffleReport& report);
/// Aligned columns: system, code, n, R1 P/R/F1, R2 P/R/F1.
void write_report_text(std::ostream& out, std::span<const EvaluationReport> reports);
void write_shuffle_text(std::ostream& out, const ShuffleReport& report);
void write_per_document_csv(std::ostream& out, const EvaluationReport& report);
/// One row per report: system, code, bin_0 .. bin_{b-1}.
void write_histogram_csv(std::ostream& out, std::span<const EvaluationReport> reports);

void write_summaries_jsonl(std::ostream& out, std::span<const SystemSummary> summaries, ControlCode code,
                           std::string_view config_hash);
std::vector<SystemSummary> read_summaries_jsonl(std::istream& in);

}  // namespace ctrlsum
