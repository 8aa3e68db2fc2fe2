#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "ctrlsum/error.hpp"
#include "ctrlsum/semantic_match.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ctrlsum;

TEST_CASE("greedy match score examples") {
  const auto a = Matrix::from_rows({{0.6, 0.8}});
  auto s = greedy_match_score(a, a);
  CHECK(s.precision == doctest::Approx(1.0));
  CHECK(s.recall == doctest::Approx(1.0));
  CHECK(s.f1 == doctest::Approx(1.0));

  const auto ref = Matrix::from_rows({{1, 0}, {0, 1}});
  const auto cand = Matrix::from_rows({{1, 0}});
  s = greedy_match_score(cand, ref);
  CHECK(s.recall == doctest::Approx(0.5));
  CHECK(s.precision == doctest::Approx(1.0));
  CHECK(s.f1 == doctest::Approx(2.0 / 3.0));

  const auto zero = Matrix::from_rows({{0, 0}, {0, 0}});
  s = greedy_match_score(zero, ref);
  CHECK(s.recall == 0.0);
  CHECK(s.precision == 0.0);
  CHECK(s.f1 == 0.0);

  CHECK_THROWS_AS(greedy_match_score(Matrix{}, ref), Error);
  CHECK_THROWS_AS(greedy_match_score(Matrix::from_rows({{1, 0, 0}}), ref), Error);
}

TEST_CASE("greedy match score properties") {
  Rng rng(8);
  const auto random_matrix = [&](std::size_t rows) {
    Matrix m(rows, 5);
    for (double& x : m.data()) x = rng.normal();
    return m;
  };
  for (int t = 0; t < 100; ++t) {
    const auto a = random_matrix(1 + rng.uniform_index(5));
    const auto b = random_matrix(1 + rng.uniform_index(5));
    const auto ab = greedy_match_score(a, b);
    const auto ba = greedy_match_score(b, a);
    CHECK(ab.precision == ba.recall);
    CHECK(ab.recall == ba.precision);
    CHECK(greedy_match_score(a, a).recall == doctest::Approx(1.0));
    CHECK(ab.recall == doctest::Approx(oracle::recall(a, b)).epsilon(1e-12));
    auto grown = a;
    grown.push_row(random_matrix(1).row(0));
    CHECK(greedy_match_score(grown, b).recall >= ab.recall);
  }
}

TEST_CASE("semantic oracle picks an exact copy") {
  const auto doc = make_document("d", {"alpha beta.", "gamma delta.", "epsilon zeta.", "eta theta iota."},
                                 std::vector<std::string>{"eta theta iota."});
  HashEmbeddingProvider p(32, 0);
  const auto emb = embed_document(p, doc);
  const auto o = build_semantic_oracle(doc, emb);
  REQUIRE(o.pairs.size() == 1);
  CHECK(o.pairs[0].gold_index == 0);
  CHECK(o.pairs[0].source_index == 3);
  CHECK(o.pairs[0].score.recall == doctest::Approx(1.0));
  CHECK(o.selected == std::vector<std::size_t>{3});
}

TEST_CASE("semantic oracle threshold excludes weak candidates") {
  // Each gold token matches candidates at cosine 0.4 exactly.
  Document doc = make_document("t", {"a.", "b."}, std::vector<std::string>{"c."});
  DocumentEmbeddings emb;
  emb.source = {Matrix::from_rows({{0.4, std::sqrt(1 - 0.16)}}), Matrix::from_rows({{0.4, -std::sqrt(1 - 0.16)}})};
  emb.gold = {Matrix::from_rows({{1.0, 0.0}})};
  CHECK(build_semantic_oracle(doc, emb, 0.5).selected.empty());
  CHECK(build_semantic_oracle(doc, emb, 0.4 - 1e-12).selected == std::vector<std::size_t>{0});
  // exactly at threshold is kept
  emb.source = {Matrix::from_rows({{0.5, std::sqrt(0.75)}}), Matrix::from_rows({{0.5, -std::sqrt(0.75)}})};
  const auto o = build_semantic_oracle(doc, emb, emb.source[0](0, 0));
  CHECK(o.selected == std::vector<std::size_t>{0});
}

TEST_CASE("semantic oracle errors") {
  const auto doc = make_document("d", {"a b."});
  HashEmbeddingProvider p(8, 0);
  CHECK_THROWS_AS(build_semantic_oracle(doc, embed_document(p, doc)), Error);
  const auto with_gold = make_document("d", {"a b.", "c d."}, std::vector<std::string>{"a b."});
  auto emb = embed_document(p, with_gold);
  emb.source.pop_back();
  CHECK_THROWS_AS(build_semantic_oracle(with_gold, emb), Error);
}

TEST_CASE("semantic oracle matches brute force and is storage-order invariant") {
  Rng rng(21);
  HashEmbeddingProvider p(16, 5);
  for (int t = 0; t < 100; ++t) {
    const auto doc = fixture::random_document(rng, "r", 1 + rng.uniform_index(6), 1 + rng.uniform_index(3));
    const auto emb = embed_document(p, doc);
    const auto o = build_semantic_oracle(doc, emb);
    CHECK(o.selected == oracle::semantic_oracle(doc, emb, 0.5));
    CHECK(o.selected.size() <= doc.gold->size());
    for (const auto& pair : o.pairs) CHECK(pair.score.recall >= 0.5);
    CHECK(std::is_sorted(o.selected.begin(), o.selected.end()));
  }
}

TEST_CASE("lexical oracle") {
  auto doc = make_document("l", {"the cat.", "a dog ran."}, std::vector<std::string>{"the cat sat."});
  // gold "the cat sat ." vs "the cat ." : R1 recall 3/4, R2 recall 1/3
  auto o = build_lexical_oracle(doc);
  CHECK(o.selected == std::vector<std::size_t>{0});
  CHECK(o.pairs[0].score.recall == doctest::Approx((3.0 / 4.0 + 1.0 / 3.0) / 2.0));
  CHECK(o.metric == OracleMetric::Lexical);

  doc = make_document("l", {"x y z.", "the gold line here."}, std::vector<std::string>{"the gold line here."});
  o = build_lexical_oracle(doc);
  CHECK(o.selected == std::vector<std::size_t>{1});
  CHECK(o.pairs[0].score.recall == doctest::Approx(1.0));

  doc = make_document("l", {"hello"}, std::vector<std::string>{"hello"});
  o = build_lexical_oracle(doc);
  CHECK(o.pairs[0].score.recall == doctest::Approx(1.0));

  doc = make_document("l", {"nothing shared"}, std::vector<std::string>{"totally different"});
  CHECK(build_lexical_oracle(doc).selected.empty());
}

TEST_CASE("oracle position cdf") {
  Corpus c;
  std::vector<OracleAlignment> al;
  for (int i = 0; i < 3; ++i) {
    std::vector<std::string> s(10, "w.");
    c.documents.push_back(make_document("d" + std::to_string(i), s));
    al.push_back({"d" + std::to_string(i), {}, {0}, OracleMetric::Semantic});
  }
  auto cdf = oracle_position_cdf(al, c, 10);
  CHECK(cdf[0] == 1.0);
  CHECK(cdf.back() == 1.0);

  // hand tally: six selections in 10-sentence docs at 0, 1, 1, 5, 9, 9 and one 4-sentence doc
  c.documents.push_back(make_document("e", {"a.", "b.", "c.", "d."}));
  al = {{"d0", {}, {0, 1, 5}, OracleMetric::Semantic}, {"d1", {}, {1, 9}, OracleMetric::Semantic},
        {"e", {}, {3}, OracleMetric::Semantic}};
  cdf = oracle_position_cdf(al, c, 10);
  // bins: 0->0, 1->1, 5->5, 1->1, 9->9, e:3 -> 3*10/4 = 7
  const std::vector<double> want{1 / 6., 3 / 6., 3 / 6., 3 / 6., 3 / 6., 4 / 6., 4 / 6., 5 / 6., 5 / 6., 1.0};
  for (std::size_t b = 0; b < 10; ++b) CHECK(cdf[b] == doctest::Approx(want[b]));
  CHECK_THROWS(oracle_position_cdf(std::vector<OracleAlignment>{}, c, 10));
}

TEST_CASE("oracle JSONL round trip") {
  Rng rng(3);
  HashEmbeddingProvider p(16, 0);
  std::vector<OracleAlignment> al;
  for (int i = 0; i < 5; ++i) {
    const auto doc = fixture::random_document(rng, "d" + std::to_string(i), 5, 2);
    al.push_back(build_semantic_oracle(doc, embed_document(p, doc)));
  }
  std::stringstream ss;
  write_oracle_jsonl(ss, al, {p.name(), 0.5, "abc"});
  const std::string text = ss.str();
  CHECK(text.find("\"provider\":\"hash-d16-s0\"") != std::string::npos);
  CHECK(text.find("\"gold_order\":\"document\"") != std::string::npos);
  CHECK(text.find("\"config_hash\":\"abc\"") != std::string::npos);
  const auto back = read_oracle_jsonl(ss);
  REQUIRE(back.size() == al.size());
  for (std::size_t i = 0; i < al.size(); ++i) {
    CHECK(back[i].doc_id == al[i].doc_id);
    CHECK(back[i].selected == al[i].selected);
    REQUIRE(back[i].pairs.size() == al[i].pairs.size());
    for (std::size_t k = 0; k < al[i].pairs.size(); ++k) {
      CHECK(back[i].pairs[k].source_index == al[i].pairs[k].source_index);
      CHECK(back[i].pairs[k].score.recall == al[i].pairs[k].score.recall);
    }
  }
  std::stringstream again;
  write_oracle_jsonl(again, back, {p.name(), 0.5, "abc"});
  CHECK(again.str() == text);
}
