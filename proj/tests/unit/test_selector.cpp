#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ctrlsum/error.hpp"
#include "ctrlsum/selector.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ctrlsum;
using S = SelectorParams;

namespace {
using Vec = std::vector<double>;

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain loop-by-loop LSTM over one direction of one layer.
std::vector<Vec> reference_lstm(const S& p, std::size_t layer, std::size_t dir, const std::vector<Vec>& xs) {
  const std::size_t h = p.dims.hidden;
  const auto& wih = p.tensors[S::lstm_index(layer, dir, 0)].values;
  const auto& whh = p.tensors[S::lstm_index(layer, dir, 1)].values;
  const auto& b = p.tensors[S::lstm_index(layer, dir, 2)].values;
  const std::size_t in = xs.front().size();
  std::vector<Vec> out(xs.size());
  Vec hs(h, 0.0), cs(h, 0.0);
  for (std::size_t step = 0; step < xs.size(); ++step) {
    const std::size_t t = dir == 0 ? step : xs.size() - 1 - step;
    Vec z(4 * h);
    for (std::size_t r = 0; r < 4 * h; ++r) {
      z[r] = b[r];
      for (std::size_t c = 0; c < in; ++c) z[r] += wih[r * in + c] * xs[t][c];
      for (std::size_t c = 0; c < h; ++c) z[r] += whh[r * h + c] * hs[c];
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = sig(z[j]);
      const double fg = sig(z[h + j]);
      const double gg = std::tanh(z[2 * h + j]);
      const double og = sig(z[3 * h + j]);
      cs[j] = fg * cs[j] + ig * gg;
      hs[j] = og * std::tanh(cs[j]);
    }
    out[t] = hs;
  }
  return out;
}

Vec reference_scores(const S& p, const std::vector<SentenceVector>& sentences, ControlCode code) {
  std::vector<Vec> xs;
  for (const auto& s : sentences) {
    Vec x(s.begin(), s.end());
    for (double c : code.as_vector()) x.push_back(c);
    xs.push_back(x);
  }
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const auto f = reference_lstm(p, layer, 0, xs);
    const auto b = reference_lstm(p, layer, 1, xs);
    for (std::size_t t = 0; t < xs.size(); ++t) {
      xs[t] = f[t];
      xs[t].insert(xs[t].end(), b[t].begin(), b[t].end());
    }
  }
  Vec out;
  const auto& w = p.tensors[S::kOutW].values;
  for (const auto& u : xs) {
    double z = p.tensors[S::kOutB].values[0];
    for (std::size_t j = 0; j < u.size(); ++j) z += w[j] * u[j];
    out.push_back(sig(z));
  }
  return out;
}

std::vector<SentenceVector> random_sentences(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<SentenceVector> out(n, SentenceVector(d));
  for (auto& v : out)
    for (double& x : v) x = rng.normal();
  return out;
}

Vec probabilities(const std::vector<ScoredSentence>& scores) {
  Vec out;
  for (const auto& s : scores) out.push_back(s.probability);
  return out;
}

std::vector<ScoredSentence> scored(const Vec& probs) {
  std::vector<ScoredSentence> out;
  for (std::size_t i = 0; i < probs.size(); ++i) out.push_back({i, probs[i]});
  return out;
}
}  // namespace

TEST_CASE("zero network scores one half") {
  const auto p = make_selector({3, 2});
  Rng rng(1);
  const auto scores = score_sentences(p, random_sentences(rng, 4, 3), ControlCode::parse("101"));
  REQUIRE(scores.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(scores[i].index == i);
    CHECK(scores[i].probability == 0.5);
  }
  CHECK_THROWS_AS(score_sentences(p, {}, ControlCode{}), Error);
  CHECK_THROWS_AS(score_sentences(p, random_sentences(rng, 2, 4), ControlCode{}), Error);
}

TEST_CASE("tensor layout") {
  const auto p = make_selector({3, 2});
  REQUIRE(p.tensors.size() == 14);
  CHECK(p.tensors[S::lstm_index(0, 0, 0)].shape == std::vector<std::size_t>{8, 6});
  CHECK(p.tensors[S::lstm_index(0, 1, 1)].shape == std::vector<std::size_t>{8, 2});
  CHECK(p.tensors[S::lstm_index(1, 0, 0)].shape == std::vector<std::size_t>{8, 4});
  CHECK(p.tensors[S::lstm_index(1, 1, 2)].shape == std::vector<std::size_t>{8});
  CHECK(p.tensors[S::kOutW].shape == std::vector<std::size_t>{1, 4});
  CHECK(p.tensors[S::kOutB].shape == std::vector<std::size_t>{1});
}

TEST_CASE("hand-set two-sentence recurrence") {
  auto p = make_selector({3, 2});
  // Every forward layer-0 gate reads the first vector entry and the importance bit.
  auto& wih = p.tensors[S::lstm_index(0, 0, 0)].values;
  for (std::size_t r = 0; r < 8; ++r) {
    wih[r * 6 + 0] = 0.5;
    wih[r * 6 + 3] = -0.25;
  }
  p.tensors[S::kOutW].values = {1.0, 0, 0, 0};
  const std::vector<SentenceVector> s{{2, 0, 0}, {-1, 0, 0}};
  const auto code = ControlCode::parse("100");

  // Step 1: z = 0.5 * 2 - 0.25 = 0.75 for every gate.
  const double z1 = 0.75;
  const double c1 = sig(z1) * std::tanh(z1);
  const double h1 = sig(z1) * std::tanh(c1);
  // Step 2: z = 0.5 * -1 - 0.25 = -0.75 (recurrent weights are zero).
  const double z2 = -0.75;
  const double c2 = sig(z2) * c1 + sig(z2) * std::tanh(z2);
  const double h2 = sig(z2) * std::tanh(c2);
  // A zero second layer hides the first.
  const auto got = probabilities(score_sentences(p, s, code));
  CHECK(got[0] == doctest::Approx(0.5));
  CHECK(got[1] == doctest::Approx(0.5));

  // Route the first forward unit through the second layer.
  auto& w1 = p.tensors[S::lstm_index(1, 0, 0)].values;  // 8 x 4
  for (std::size_t r = 0; r < 8; ++r) w1[r * 4 + 0] = 1.0;
  const double a1 = h1;
  const double k1 = sig(a1) * std::tanh(a1);
  const double u1 = sig(a1) * std::tanh(k1);
  const double a2 = h2;
  const double k2 = sig(a2) * k1 + sig(a2) * std::tanh(a2);
  const double u2 = sig(a2) * std::tanh(k2);
  const auto routed = probabilities(score_sentences(p, s, code));
  CHECK(routed[0] == doctest::Approx(sig(u1)).epsilon(1e-14));
  CHECK(routed[1] == doctest::Approx(sig(u2)).epsilon(1e-14));
}

TEST_CASE("matches a loop-by-loop reference network") {
  Rng rng(2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t d = 1 + rng.uniform_index(5);
    const auto p = init_selector({d, 1 + rng.uniform_index(4)}, seed);
    const auto s = random_sentences(rng, 1 + rng.uniform_index(7), d);
    const auto code = ControlCode::from_value(static_cast<unsigned>(rng.uniform_index(8)));
    const auto got = probabilities(score_sentences(p, s, code));
    const auto want = reference_scores(p, s, code);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    CHECK(probabilities(score_sentences(p, s, code)) == got);
  }
}

TEST_CASE("the code reaches the scores") {
  Rng rng(3);
  const auto p = init_selector({4, 3}, 3);
  const auto s = random_sentences(rng, 5, 4);
  CHECK(probabilities(score_sentences(p, s, ControlCode::parse("000"))) !=
        probabilities(score_sentences(p, s, ControlCode::parse("111"))));
}

TEST_CASE("scores depend on sentence order") {
  Rng rng(4);
  const auto p = init_selector({4, 3}, 4);
  const auto s = random_sentences(rng, 4, 4);
  const auto code = ControlCode::parse("001");
  const auto base = probabilities(score_sentences(p, s, code));
  auto perm = s;
  std::reverse(perm.begin(), perm.end());
  auto moved = probabilities(score_sentences(p, perm, code));
  std::reverse(moved.begin(), moved.end());
  bool differs = false;
  for (std::size_t i = 0; i < base.size(); ++i) differs = differs || std::abs(base[i] - moved[i]) > 1e-9;
  CHECK(differs);
}

TEST_CASE("BCE gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 50);
    auto p = init_selector({4, 3}, seed);
    TrainingExample ex{"d", random_sentences(rng, 3, 4), ControlCode::from_value(static_cast<unsigned>(seed % 8)),
                       {1, 0, static_cast<std::uint8_t>(seed % 2)}};
    auto grads = p.tensors.zeros_like();
    const double loss = example_loss_and_gradient(p, ex, grads);
    CHECK(loss == doctest::Approx(example_loss(p, ex)).epsilon(1e-14));
    const auto check = oracle::check_gradient(p.tensors, grads, [&] { return example_loss(p, ex); });
    INFO("seed " << seed << " worst " << check.worst_name << "[" << check.worst_index << "] "
                 << check.worst_analytic << " vs " << check.worst_numeric);
    CHECK(check.worst_relative < 1e-4);
  }
}

TEST_CASE("summed BCE by hand") {
  const auto p = make_selector({2, 2});
  const TrainingExample ex{"d", {{1, 0}, {0, 1}, {1, 1}}, ControlCode{}, {1, 0, 1}};
  CHECK(example_loss(p, ex) == doctest::Approx(3 * std::log(2.0)));
  const TrainingExample bad{"d", {{1, 0}}, ControlCode{}, {1, 0}};
  CHECK_THROWS_AS(example_loss(p, bad), Error);
}

TEST_CASE("overfits a single example") {
  Rng rng(5);
  TrainingExample ex{"d", random_sentences(rng, 6, 4), ControlCode::parse("010"), {1, 0, 0, 1, 0, 1}};
  const std::vector<TrainingExample> data{ex};
  SelTrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch = 1;
  cfg.dropout = 0.0;
  cfg.weight_decay = 0.0;
  cfg.epochs = 200;
  cfg.hidden = 3;
  const auto result = train_selector(data, data, cfg);
  CHECK(result.history.size() == 200);
  CHECK(example_loss(result.params, ex) < 0.05);
}

TEST_CASE("training is deterministic and keeps the best validation epoch") {
  Rng rng(6);
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> val;
  for (int i = 0; i < 12; ++i) {
    const std::size_t n = 2 + rng.uniform_index(5);
    TrainingExample ex{"d" + std::to_string(i), random_sentences(rng, n, 3), ControlCode::parse("001"),
                       std::vector<std::uint8_t>(n, 0)};
    ex.targets[0] = 1;
    (i < 9 ? train : val).push_back(std::move(ex));
  }
  SelTrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch = 4;
  cfg.epochs = 6;
  cfg.hidden = 4;
  cfg.seed = 8;
  const auto a = train_selector(train, val, cfg);
  const auto b = train_selector(train, val, cfg);
  CHECK(a.params.tensors == b.params.tensors);
  REQUIRE(a.history.size() == 6);
  for (const auto& e : a.history) CHECK(a.history[a.best_epoch].validation_loss <= e.validation_loss);
  double mean_val = 0.0;
  for (const auto& ex : val) mean_val += example_loss(a.params, ex);
  CHECK(mean_val / 3 == doctest::Approx(a.history[a.best_epoch].validation_loss));
  cfg.seed = 9;
  CHECK(train_selector(train, val, cfg).params.tensors != a.params.tensors);
  CHECK_THROWS_AS(train_selector({}, val, cfg), Error);
  CHECK_THROWS_AS(train_selector(train, {}, cfg), Error);
}

TEST_CASE("extraction examples") {
  const auto doc = make_document("d", {"alpha beta gamma.", "delta epsilon zeta.", "eta theta iota.",
                                       "kappa lambda mu.", "nu xi omicron."});
  CHECK(extract_summary(scored({0.2, 0.9, 0.1, 0.8, 0.7}), doc) == std::vector<std::size_t>{1, 3, 4});
  CHECK(extract_summary(scored({0.2, 0.9, 0.1, 0.8, 0.7}), doc, 1) == std::vector<std::size_t>{1});
  CHECK(extract_summary(scored({0.5, 0.5, 0.5, 0.5, 0.5}), doc) == std::vector<std::size_t>{0, 1, 2});

  const auto dup = make_document("d", {"the cat sat down.", "the cat sat down.", "a dog ran.", "birds sing."});
  CHECK(extract_summary(scored({0.9, 0.8, 0.7, 0.1}), dup) == std::vector<std::size_t>{0, 2, 3});
  CHECK(extract_summary(scored({0.9, 0.8, 0.7, 0.1}), dup, 3, false) == std::vector<std::size_t>{0, 1, 2});

  const auto two = make_document("d", {"one two.", "three four."});
  CHECK(extract_summary(scored({0.1, 0.2}), two, 3) == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(extract_summary({}, two), Error);
  CHECK_THROWS_AS(extract_summary(scored({0.1}), two), Error);
}

TEST_CASE("shared trigrams") {
  const std::vector<std::string> a{"a", "b", "c", "d"};
  CHECK(shares_trigram(a, std::vector<std::string>{"x", "b", "c", "d"}));
  CHECK_FALSE(shares_trigram(a, std::vector<std::string>{"b", "c", "x", "d"}));
  CHECK_FALSE(shares_trigram(a, std::vector<std::string>{"a", "b"}));
  CHECK_FALSE(shares_trigram(std::vector<std::string>{"a", "b"}, std::vector<std::string>{"a", "b"}));
}

TEST_CASE("extraction never returns sentences sharing a trigram") {
  Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.uniform_index(10);
    std::vector<std::string> sentences;
    for (std::size_t i = 0; i < n; ++i) sentences.push_back(fixture::random_sentence(rng, 2 + rng.uniform_index(6), 8));
    const auto doc = make_document("d", sentences);
    Vec probs(n);
    for (double& x : probs) x = rng.uniform();
    const std::size_t k = 1 + rng.uniform_index(4);
    const auto out = extract_summary(scored(probs), doc, k);
    CHECK(out.size() <= k);
    CHECK(std::is_sorted(out.begin(), out.end()));
    CHECK(std::adjacent_find(out.begin(), out.end()) == out.end());
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t j = i + 1; j < out.size(); ++j)
        CHECK_FALSE(shares_trigram(doc.sentences[out[i]].tokens, doc.sentences[out[j]].tokens));
  }
}

TEST_CASE("training pairs take codes from the remapped aspects") {
  Corpus corpus;
  for (int i = 0; i < 3; ++i) {
    corpus.documents.push_back(make_document("d" + std::to_string(i), {"a.", "b.", "c.", "d.", "e.", "f."}));
  }
  std::vector<std::vector<SentenceVector>> vectors(3, std::vector<SentenceVector>(6, SentenceVector{1.0}));
  std::vector<OracleAlignment> alignments(3);
  alignments[0].doc_id = "d0";
  alignments[0].selected = {0, 1};
  alignments[1].doc_id = "d1";
  alignments[1].selected = {2, 4, 5};
  alignments[2].doc_id = "d2";
  alignments[2].selected = {4, 5};
  std::vector<DocumentLabels> labels(3);
  for (int i = 0; i < 3; ++i) {
    labels[i].doc_id = "d" + std::to_string(i);
    labels[i].aspects.position = {0, 1, 2, 3};
  }
  labels[1].aspects.importance = {2, 4};
  labels[1].aspects.diversity = {4, 5};

  auto examples = label_training_pairs(corpus, alignments, labels, {}, vectors);
  REQUIRE(examples.size() == 3);
  CHECK(examples[0].code.str() == "001");
  CHECK(examples[0].targets == std::vector<std::uint8_t>{1, 1, 0, 0, 0, 0});
  CHECK(examples[1].code.str() == "110");
  CHECK(examples[2].code.str() == "000");

  // An augmented diversity label on sentence 5 of d2 adds one diversity hit,
  // which is enough for a two-sentence summary.
  const std::vector<SentenceAspectLabel> extra{{"d2", 5, AspectFlags::parse("010"), LabelOrigin::ClusterAugmented},
                                               {"d2", 4, AspectFlags::parse("100"), LabelOrigin::Direct}};
  examples = label_training_pairs(corpus, alignments, labels, extra, vectors);
  CHECK(examples[2].code.str() == "010");

  auto empty = alignments;
  empty[0].selected.clear();
  CHECK(label_training_pairs(corpus, empty, labels, {}, vectors)[0].code.str() == "000");
  CHECK_THROWS_AS(label_training_pairs(corpus, std::span(alignments).first(2), labels, {}, vectors), Error);
  CHECK_THROWS_AS(label_training_pairs(corpus, alignments, std::span(labels).first(1), {}, vectors), Error);
}

TEST_CASE("checkpoint round trip") {
  fixture::TempDir dir;
  const auto p = init_selector({3, 2}, 1);
  save_selector(dir / "sel.ckpt", p, {{"seed", 1}});
  const auto q = load_selector(dir / "sel.ckpt");
  CHECK(q.dims == p.dims);
  REQUIRE(q.tensors.same_layout(p.tensors));
  for (std::size_t i = 0; i < p.tensors.size(); ++i)
    for (std::size_t j = 0; j < p.tensors[i].values.size(); ++j)
      CHECK(q.tensors[i].values[j] == static_cast<double>(static_cast<float>(p.tensors[i].values[j])));
  CHECK_THROWS_AS(load_selector(dir / "nope.ckpt"), Error);
}
