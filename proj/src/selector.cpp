#include "ctrlsum/selector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "ctrlsum/checkpoint.hpp"
#include "ctrlsum/error.hpp"
#include "ctrlsum/kernels.hpp"

namespace ctrlsum {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// BCE on a logit: softplus(z) - y z, computed without overflow.
double bce_with_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

struct LstmTrace {
  std::vector<Vector> gates;  // per time step: i, f, g, o activations (4H)
  std::vector<Vector> cell;
  std::vector<Vector> hidden;
};

struct Sequence {
  std::vector<Vector> steps;
};

// Runs one direction over `inputs`; trace entries are indexed by time step.
void lstm_forward(const ParameterSet& t, std::size_t base, std::size_t hidden_size, const std::vector<Vector>& inputs,
                  bool reverse, LstmTrace& trace) {
  const std::size_t steps = inputs.size();
  const std::size_t h4 = 4 * hidden_size;
  const auto& w_ih = t[base];
  const auto& w_hh = t[base + 1];
  const auto& bias = t[base + 2];
  trace.gates.assign(steps, Vector(h4));
  trace.cell.assign(steps, Vector(hidden_size));
  trace.hidden.assign(steps, Vector(hidden_size));
  Vector h_prev(hidden_size, 0.0);
  Vector c_prev(hidden_size, 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t time = reverse ? steps - 1 - s : s;
    auto& a = trace.gates[time];
    std::copy(bias.values.begin(), bias.values.end(), a.begin());
    kernels::gemv(w_ih.values, h4, w_ih.cols(), inputs[time], a);
    kernels::gemv(w_hh.values, h4, hidden_size, h_prev, a);
    auto& c = trace.cell[time];
    auto& h = trace.hidden[time];
    for (std::size_t j = 0; j < hidden_size; ++j) {
      const double ig = sigmoid(a[j]);
      const double fg = sigmoid(a[hidden_size + j]);
      const double gg = std::tanh(a[2 * hidden_size + j]);
      const double og = sigmoid(a[3 * hidden_size + j]);
      a[j] = ig;
      a[hidden_size + j] = fg;
      a[2 * hidden_size + j] = gg;
      a[3 * hidden_size + j] = og;
      c[j] = fg * c_prev[j] + ig * gg;
      h[j] = og * std::tanh(c[j]);
    }
    h_prev = h;
    c_prev = c;
  }
}

// Backpropagates d(loss)/d(hidden[t]) through one direction. Accumulates
// `scale`-weighted parameter gradients and d(loss)/d(inputs[t]) into `d_inputs`.
void lstm_backward(const ParameterSet& t, std::size_t base, std::size_t hidden_size, const std::vector<Vector>& inputs,
                   bool reverse, const LstmTrace& trace, const std::vector<Vector>& d_hidden, ParameterSet& grads,
                   std::vector<Vector>& d_inputs) {
  const std::size_t steps = inputs.size();
  const std::size_t h4 = 4 * hidden_size;
  const auto& w_ih = t[base];
  const auto& w_hh = t[base + 1];
  const std::size_t in_dim = w_ih.cols();
  Vector dh_next(hidden_size, 0.0);
  Vector dc_next(hidden_size, 0.0);
  Vector da(h4);
  const Vector zeros(hidden_size, 0.0);
  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t time = reverse ? steps - 1 - s : s;
    const bool first = s == 0;
    const std::size_t prev_time = reverse ? time + 1 : time - 1;
    const Vector& c_prev = first ? zeros : trace.cell[prev_time];
    const Vector& h_prev = first ? zeros : trace.hidden[prev_time];
    const auto& a = trace.gates[time];
    const auto& c = trace.cell[time];
    Vector dc_prev(hidden_size);
    for (std::size_t j = 0; j < hidden_size; ++j) {
      const double ig = a[j];
      const double fg = a[hidden_size + j];
      const double gg = a[2 * hidden_size + j];
      const double og = a[3 * hidden_size + j];
      const double tc = std::tanh(c[j]);
      const double dh = d_hidden[time][j] + dh_next[j];
      const double dc = dc_next[j] + dh * og * (1.0 - tc * tc);
      da[j] = dc * gg * ig * (1.0 - ig);
      da[hidden_size + j] = dc * c_prev[j] * fg * (1.0 - fg);
      da[2 * hidden_size + j] = dc * ig * (1.0 - gg * gg);
      da[3 * hidden_size + j] = dh * tc * og * (1.0 - og);
      dc_prev[j] = dc * fg;
    }
    kernels::rank1_update(grads[base].values, h4, in_dim, 1.0, da, inputs[time]);
    kernels::rank1_update(grads[base + 1].values, h4, hidden_size, 1.0, da, h_prev);
    kernels::axpy(1.0, da, grads[base + 2].values);
    kernels::gemv_t(w_ih.values, h4, in_dim, da, d_inputs[time]);
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    kernels::gemv_t(w_hh.values, h4, hidden_size, da, dh_next);
    dc_next = std::move(dc_prev);
  }
}

struct SelectorTrace {
  std::vector<Vector> layer0_in;
  LstmTrace l0[2];
  std::vector<Vector> mask0;
  std::vector<Vector> layer1_in;  // concatenated layer-0 output after dropout
  LstmTrace l1[2];
  std::vector<Vector> mask_u;
  std::vector<Vector> u;          // concatenated layer-1 output after dropout
  std::vector<double> logits;
};

Vector concat_dropout(const Vector& fwd, const Vector& bwd, Vector& mask, double rate, Rng* rng) {
  Vector out(fwd.size() + bwd.size());
  std::copy(fwd.begin(), fwd.end(), out.begin());
  std::copy(bwd.begin(), bwd.end(), out.begin() + static_cast<std::ptrdiff_t>(fwd.size()));
  mask.assign(out.size(), 1.0);
  if (rng != nullptr && rate > 0.0) {
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& m : mask) m = rng->bernoulli(rate) ? 0.0 : keep_scale;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  }
  return out;
}

SelectorTrace selector_trace(const SelectorParams& params, std::span<const SentenceVector> sentences, ControlCode code,
                             double dropout, Rng* rng) {
  if (sentences.empty()) throw Error("selector: document has no sentences");
  const auto& t = params.tensors;
  const std::size_t hidden = params.dims.hidden;
  const auto bits = code.as_vector();
  SelectorTrace tr;
  for (const auto& s : sentences) {
    if (s.size() != params.dims.input) {
      throw Error("selector: sentence vector has dimension " + std::to_string(s.size()) + ", expected " +
                  std::to_string(params.dims.input));
    }
    Vector x(s.begin(), s.end());
    x.insert(x.end(), bits.begin(), bits.end());
    tr.layer0_in.push_back(std::move(x));
  }
  const std::size_t steps = sentences.size();
  lstm_forward(t, SelectorParams::lstm_index(0, 0, 0), hidden, tr.layer0_in, false, tr.l0[0]);
  lstm_forward(t, SelectorParams::lstm_index(0, 1, 0), hidden, tr.layer0_in, true, tr.l0[1]);
  tr.mask0.resize(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    tr.layer1_in.push_back(concat_dropout(tr.l0[0].hidden[i], tr.l0[1].hidden[i], tr.mask0[i], dropout, rng));
  }
  lstm_forward(t, SelectorParams::lstm_index(1, 0, 0), hidden, tr.layer1_in, false, tr.l1[0]);
  lstm_forward(t, SelectorParams::lstm_index(1, 1, 0), hidden, tr.layer1_in, true, tr.l1[1]);
  tr.mask_u.resize(steps);
  const auto& w_out = t[SelectorParams::kOutW].values;
  const double b_out = t[SelectorParams::kOutB].values[0];
  for (std::size_t i = 0; i < steps; ++i) {
    tr.u.push_back(concat_dropout(tr.l1[0].hidden[i], tr.l1[1].hidden[i], tr.mask_u[i], dropout, rng));
    tr.logits.push_back(kernels::dot(w_out, tr.u.back()) + b_out);
  }
  return tr;
}

void check_example(const TrainingExample& ex) {
  if (ex.targets.size() != ex.sentences.size()) {
    throw Error("training example '" + ex.doc_id + "': target count does not match sentence count");
  }
}

void split_halves(const std::vector<Vector>& joined, std::size_t hidden, std::vector<Vector>& fwd,
                  std::vector<Vector>& bwd) {
  fwd.assign(joined.size(), Vector(hidden));
  bwd.assign(joined.size(), Vector(hidden));
  for (std::size_t i = 0; i < joined.size(); ++i) {
    std::copy(joined[i].begin(), joined[i].begin() + static_cast<std::ptrdiff_t>(hidden), fwd[i].begin());
    std::copy(joined[i].begin() + static_cast<std::ptrdiff_t>(hidden), joined[i].end(), bwd[i].begin());
  }
}

std::vector<std::string> trigrams(std::span<const std::string> tokens) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + 3 <= tokens.size(); ++i) {
    out.push_back(tokens[i] + '\x1f' + tokens[i + 1] + '\x1f' + tokens[i + 2]);
  }
  return out;
}

}  // namespace

SelectorParams make_selector(SelectorDims dims) {
  if (dims.input == 0 || dims.hidden == 0) throw Error("selector: zero dimension");
  SelectorParams p;
  p.dims = dims;
  const std::size_t h = dims.hidden;
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const std::size_t in = layer == 0 ? dims.input + kCodeDim : 2 * h;
    for (std::size_t dir = 0; dir < 2; ++dir) {
      const std::string prefix = "lstm.l" + std::to_string(layer) + (dir == 0 ? ".fwd" : ".bwd");
      p.tensors.add(prefix + ".w_ih", {4 * h, in});
      p.tensors.add(prefix + ".w_hh", {4 * h, h});
      p.tensors.add(prefix + ".bias", {4 * h});
    }
  }
  p.tensors.add("out.weight", {1, 2 * h});
  p.tensors.add("out.bias", {1});
  return p;
}

SelectorParams init_selector(SelectorDims dims, std::uint64_t seed) {
  auto p = make_selector(dims);
  Rng rng(seed);
  const double recurrent = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  const double output = 1.0 / std::sqrt(static_cast<double>(2 * dims.hidden));
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const double bound = i < SelectorParams::kOutW ? recurrent : output;
    for (double& v : p.tensors[i].values) v = rng.uniform(-bound, bound);
  }
  return p;
}

std::vector<ScoredSentence> score_sentences(const SelectorParams& params, std::span<const SentenceVector> sentences,
                                            ControlCode code) {
  const auto tr = selector_trace(params, sentences, code, 0.0, nullptr);
  std::vector<ScoredSentence> out;
  out.reserve(tr.logits.size());
  for (std::size_t i = 0; i < tr.logits.size(); ++i) out.push_back({i, sigmoid(tr.logits[i])});
  return out;
}

double example_loss(const SelectorParams& params, const TrainingExample& example) {
  check_example(example);
  const auto tr = selector_trace(params, example.sentences, example.code, 0.0, nullptr);
  double loss = 0.0;
  for (std::size_t i = 0; i < tr.logits.size(); ++i) loss += bce_with_logit(tr.logits[i], example.targets[i]);
  return loss;
}

double example_loss_and_gradient(const SelectorParams& params, const TrainingExample& example, ParameterSet& grads,
                                 double scale, double dropout, Rng* rng) {
  check_example(example);
  const auto& t = params.tensors;
  const std::size_t hidden = params.dims.hidden;
  const auto tr = selector_trace(params, example.sentences, example.code, dropout, rng);
  const std::size_t steps = tr.logits.size();

  double loss = 0.0;
  std::vector<Vector> d_u(steps, Vector(2 * hidden, 0.0));
  const auto& w_out = t[SelectorParams::kOutW].values;
  for (std::size_t i = 0; i < steps; ++i) {
    const double y = example.targets[i];
    loss += bce_with_logit(tr.logits[i], y);
    const double dz = scale * (sigmoid(tr.logits[i]) - y);
    kernels::axpy(dz, tr.u[i], grads[SelectorParams::kOutW].values);
    grads[SelectorParams::kOutB].values[0] += dz;
    for (std::size_t j = 0; j < 2 * hidden; ++j) d_u[i][j] = dz * w_out[j] * tr.mask_u[i][j];
  }

  std::vector<Vector> d_fwd;
  std::vector<Vector> d_bwd;
  split_halves(d_u, hidden, d_fwd, d_bwd);
  std::vector<Vector> d_layer1_in(steps, Vector(2 * hidden, 0.0));
  lstm_backward(t, SelectorParams::lstm_index(1, 0, 0), hidden, tr.layer1_in, false, tr.l1[0], d_fwd, grads,
                d_layer1_in);
  lstm_backward(t, SelectorParams::lstm_index(1, 1, 0), hidden, tr.layer1_in, true, tr.l1[1], d_bwd, grads,
                d_layer1_in);
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < 2 * hidden; ++j) d_layer1_in[i][j] *= tr.mask0[i][j];
  }
  split_halves(d_layer1_in, hidden, d_fwd, d_bwd);
  std::vector<Vector> d_layer0_in(steps, Vector(params.dims.input + kCodeDim, 0.0));
  lstm_backward(t, SelectorParams::lstm_index(0, 0, 0), hidden, tr.layer0_in, false, tr.l0[0], d_fwd, grads,
                d_layer0_in);
  lstm_backward(t, SelectorParams::lstm_index(0, 1, 0), hidden, tr.layer0_in, true, tr.l0[1], d_bwd, grads,
                d_layer0_in);
  return loss;
}

SelectorTrainResult train_selector(std::span<const TrainingExample> train, std::span<const TrainingExample> validation,
                                   const SelTrainConfig& config) {
  if (train.empty()) throw Error("train_selector: empty training split");
  if (validation.empty()) throw Error("train_selector: empty validation split");
  if (config.lr <= 0.0) throw Error("train_selector: lr must be > 0");
  if (config.epochs == 0 || config.batch == 0) throw Error("train_selector: epochs and batch must be >= 1");
  const std::size_t input = train.front().sentences.front().size();

  Rng rng(config.seed);
  SelectorTrainResult result;
  result.params = init_selector({input, config.hidden}, rng.next());
  std::vector<std::size_t> all(result.params.tensors.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Adam optimizer({config.lr, 0.9, 0.999, 1e-8, config.weight_decay}, result.params.tensors, all);
  auto grads = result.params.tensors.zeros_like();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best_val = std::numeric_limits<double>::infinity();
  SelectorParams best = result.params;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    SelectorEpoch stats;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(start + config.batch, order.size());
      const double scale = 1.0 / static_cast<double>(end - start);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        batch_loss += example_loss_and_gradient(result.params, train[order[i]], grads, scale, config.dropout, &rng);
      }
      if (!std::isfinite(batch_loss)) {
        throw Error("train_selector: non-finite loss in epoch " + std::to_string(epoch) + " at example " +
                    std::to_string(start));
      }
      optimizer.step(result.params.tensors, grads);
      stats.train_loss += batch_loss;
    }
    stats.train_loss /= static_cast<double>(train.size());
    for (const auto& ex : validation) stats.validation_loss += example_loss(result.params, ex);
    stats.validation_loss /= static_cast<double>(validation.size());
    result.history.push_back(stats);
    if (stats.validation_loss < best_val) {
      best_val = stats.validation_loss;
      best = result.params;
      result.best_epoch = epoch;
    }
  }
  result.params = std::move(best);
  return result;
}

bool shares_trigram(std::span<const std::string> a, std::span<const std::string> b) {
  const auto ta = trigrams(a);
  const auto tb = trigrams(b);
  const std::set<std::string> lookup(ta.begin(), ta.end());
  return std::any_of(tb.begin(), tb.end(), [&](const std::string& g) { return lookup.count(g) > 0; });
}

std::vector<std::size_t> extract_summary(std::span<const ScoredSentence> scores, const Document& doc,
                                         std::size_t top_k, bool trigram_blocking) {
  if (scores.empty()) throw Error("extract_summary: no scores");
  if (scores.size() != doc.size()) {
    throw Error("extract_summary: " + std::to_string(scores.size()) + " scores for " + std::to_string(doc.size()) +
                " sentences in '" + doc.id + "'");
  }
  std::vector<ScoredSentence> ranked(scores.begin(), scores.end());
  std::sort(ranked.begin(), ranked.end(), [](const ScoredSentence& a, const ScoredSentence& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.index < b.index;
  });
  std::vector<std::size_t> accepted;
  std::set<std::string> seen;
  for (const auto& s : ranked) {
    if (accepted.size() >= top_k) break;
    if (s.index >= doc.size()) throw Error("extract_summary: sentence index out of range");
    const auto grams = trigrams(doc.sentences[s.index].tokens);
    if (trigram_blocking &&
        std::any_of(grams.begin(), grams.end(), [&](const std::string& g) { return seen.count(g) > 0; })) {
      continue;
    }
    seen.insert(grams.begin(), grams.end());
    accepted.push_back(s.index);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

std::vector<TrainingExample> label_training_pairs(const Corpus& corpus, std::span<const OracleAlignment> alignments,
                                                  std::span<const DocumentLabels> aspect_sets,
                                                  std::span<const SentenceAspectLabel> augmented_labels,
                                                  const std::vector<std::vector<SentenceVector>>& vectors) {
  if (vectors.size() != corpus.size()) throw Error("label_training_pairs: sentence vectors do not cover the corpus");
  std::map<std::string, const OracleAlignment*> by_alignment;
  for (const auto& a : alignments) by_alignment[a.doc_id] = &a;
  std::map<std::string, const DocumentLabels*> by_labels;
  for (const auto& l : aspect_sets) by_labels[l.doc_id] = &l;
  std::map<std::string, std::vector<const SentenceAspectLabel*>> augmented;
  for (const auto& l : augmented_labels) {
    if (l.origin == LabelOrigin::ClusterAugmented) augmented[l.doc_id].push_back(&l);
  }

  std::vector<TrainingExample> out;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& doc = corpus.documents[d];
    const auto a = by_alignment.find(doc.id);
    if (a == by_alignment.end()) throw Error("label_training_pairs: missing alignment for '" + doc.id + "'");
    const auto l = by_labels.find(doc.id);
    if (l == by_labels.end()) throw Error("label_training_pairs: missing sub-aspect labels for '" + doc.id + "'");
    if (vectors[d].size() != doc.size()) throw Error("label_training_pairs: vector count mismatch for '" + doc.id + "'");

    SubAspectSet aspects = l->second->aspects;
    if (const auto extra = augmented.find(doc.id); extra != augmented.end()) {
      for (const auto* label : extra->second) {
        for (Aspect asp : kAspects) {
          if (!label->labels.get(asp)) continue;
          auto& set = aspects.get(asp);
          if (!std::binary_search(set.begin(), set.end(), label->index)) {
            set.insert(std::upper_bound(set.begin(), set.end(), label->index), label->index);
          }
        }
      }
    }
    TrainingExample ex;
    ex.doc_id = doc.id;
    ex.sentences = vectors[d];
    ex.targets.assign(doc.size(), 0);
    const auto& selected = a->second->selected;
    for (std::size_t idx : selected) {
      if (idx >= doc.size()) throw Error("label_training_pairs: oracle index out of range in '" + doc.id + "'");
      ex.targets[idx] = 1;
    }
    ex.code = selected.empty() ? ControlCode{} : map_summary(selected, aspects);
    out.push_back(std::move(ex));
  }
  return out;
}

void save_selector(const std::filesystem::path& path, const SelectorParams& params, const nlohmann::json& metadata) {
  nlohmann::json header = metadata;
  header["model"] = "conditional-bilstm-selector";
  header["dims"] = {{"input", params.dims.input}, {"hidden", params.dims.hidden}, {"code", kCodeDim}, {"layers", 2}};
  write_checkpoint(path, std::move(header), params.tensors);
}

SelectorParams load_selector(const std::filesystem::path& path) {
  auto ckpt = read_checkpoint(path);
  try {
    if (ckpt.header.at("model") != "conditional-bilstm-selector") {
      throw Error("not a selector checkpoint: " + path.string());
    }
    const auto& dims = ckpt.header.at("dims");
    auto params = make_selector({dims.at("input").get<std::size_t>(), dims.at("hidden").get<std::size_t>()});
    if (!params.tensors.same_layout(ckpt.tensors)) throw Error("selector checkpoint layout mismatch: " + path.string());
    params.tensors = std::move(ckpt.tensors);
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt selector checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace ctrlsum
