#pragma once

// Conditional extractive selector: a two-layer bidirectional LSTM over
// sentence vectors, each concatenated with the 3-bit control code at the first
// layer's input, followed by a per-sentence sigmoid output.
//
//   x_i = [h_i; code]
//   o_i = [LSTM_fwd^1(x)_i ; LSTM_bwd^1(x)_i]         (dropout in training)
//   u_i = [LSTM_fwd^2(o)_i ; LSTM_bwd^2(o)_i]         (dropout in training)
//   y_i = Sigmoid(w . u_i + b)
//
// Gates use the standard LSTM cell (input, forget, cell, output; one bias
// per gate row).

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "ctrlsum/corpus.hpp"
#include "ctrlsum/embeddings.hpp"
#include "ctrlsum/parameters.hpp"
#include "ctrlsum/rng.hpp"
#include "ctrlsum/semantic_match.hpp"
#include "ctrlsum/subaspects.hpp"

namespace ctrlsum {

inline constexpr std::size_t kCodeDim = 3;
inline constexpr std::size_t kDefaultTopK = 3;

struct SelectorDims {
  std::size_t input = 768;
  std::size_t hidden = 384;

  friend bool operator==(const SelectorDims&, const SelectorDims&) = default;
};

struct SelectorParams {
  SelectorDims dims;
  /// Per layer (0, 1) and direction (fwd, bwd): w_ih [4H x in], w_hh [4H x H],
  /// bias [4H]; then out.weight [1 x 2H], out.bias [1].
  ParameterSet tensors;

  static std::size_t lstm_index(std::size_t layer, std::size_t direction, std::size_t which) {
    return (layer * 2 + direction) * 3 + which;
  }
  static constexpr std::size_t kOutW = 12;
  static constexpr std::size_t kOutB = 13;
};

/// All-zero parameters.
SelectorParams make_selector(SelectorDims dims);
/// Uniform(-1/sqrt(H), 1/sqrt(H)) for recurrent tensors, Uniform(-1/sqrt(2H), 1/sqrt(2H)) for the output layer.
SelectorParams init_selector(SelectorDims dims, std::uint64_t seed);

struct ScoredSentence {
  std::size_t index = 0;
  double probability = 0.0;
};

/// Evaluation-mode scores. Throws Error for an empty document or a dimension mismatch.
std::vector<ScoredSentence> score_sentences(const SelectorParams& params, std::span<const SentenceVector> sentences,
                                            ControlCode code);

struct TrainingExample {
  std::string doc_id;
  std::vector<SentenceVector> sentences;
  ControlCode code;
  std::vector<std::uint8_t> targets;
};

/// Summed binary cross-entropy of one document in evaluation mode.
double example_loss(const SelectorParams& params, const TrainingExample& example);

/// Summed BCE of one document; accumulates `scale` times its gradient into
/// `grads`. With `rng` set, dropout at `dropout` is active.
double example_loss_and_gradient(const SelectorParams& params, const TrainingExample& example, ParameterSet& grads,
                                 double scale = 1.0, double dropout = 0.0, Rng* rng = nullptr);

struct SelTrainConfig {
  double lr = 3e-4;
  double weight_decay = 1e-4;
  std::size_t batch = 64;
  double dropout = 0.2;
  std::size_t epochs = 20;
  std::size_t hidden = 384;
  std::uint64_t seed = 0;
};

struct SelectorEpoch {
  double train_loss = 0.0;       // mean summed-BCE per document
  double validation_loss = 0.0;
};

struct SelectorTrainResult {
  SelectorParams params;  // from the epoch with the lowest validation loss
  std::vector<SelectorEpoch> history;
  std::size_t best_epoch = 0;
};

/// Adam over batches of documents; each document's BCE is summed over its
/// sentences and the batch gradient is the mean over documents. Throws Error
/// on empty splits or a non-finite loss.
SelectorTrainResult train_selector(std::span<const TrainingExample> train, std::span<const TrainingExample> validation,
                                   const SelTrainConfig& config);

/// Greedy top-k in descending probability (ties to the lower index), skipping
/// any sentence that shares a word trigram with an accepted one when
/// `trigram_blocking` is on. Returns accepted indices in document order.
std::vector<std::size_t> extract_summary(std::span<const ScoredSentence> scores, const Document& doc,
                                         std::size_t top_k = kDefaultTopK, bool trigram_blocking = true);

/// True if the two token sequences share at least one word trigram.
bool shares_trigram(std::span<const std::string> a, std::span<const std::string> b);

/// One example per document: targets mark the oracle selection, and the code
/// is map_summary over the sub-aspect sets widened by cluster-augmented
/// sentence labels (an empty oracle gets code 000). `vectors[i]` holds the
/// sentence vectors of corpus.documents[i]. Throws Error when a document lacks
/// an alignment or labels.
std::vector<TrainingExample> label_training_pairs(const Corpus& corpus, std::span<const OracleAlignment> alignments,
                                                  std::span<const DocumentLabels> aspect_sets,
                                                  std::span<const SentenceAspectLabel> augmented_labels,
                                                  const std::vector<std::vector<SentenceVector>>& vectors);

void save_selector(const std::filesystem::path& path, const SelectorParams& params, const nlohmann::json& metadata);
SelectorParams load_selector(const std::filesystem::path& path);

}  // namespace ctrlsum
