#include <doctest.h>

#include <cmath>

#include "ctrlsum/autoencoder.hpp"
#include "ctrlsum/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ctrlsum;
using P = AutoencoderParams;

namespace {
Vector random_vector(Rng& rng, std::size_t d) {
  Vector v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

double leaky(double x) { return x > 0 ? x : 0.01 * x; }
}  // namespace

TEST_CASE("zero network") {
  const auto p = make_autoencoder({3, 4, 2});
  const auto out = ae_forward(p, Vector{1, 2, 3}, Vector{-1, 0, 5});
  CHECK(out.latent == Vector{0.5, 0.5});
  CHECK(out.recon == Vector{0, 0, 0});
  CHECK(out.adv_recon == Vector{0, 0, 0});
  CHECK_THROWS_AS(ae_forward(p, Vector{1, 2}, Vector{1, 2, 3}), Error);
}

TEST_CASE("hand-computed forward at d=2, latent=1") {
  auto p = make_autoencoder({2, 2, 1});
  auto& t = p.tensors;
  t[P::kEnc1W].values = {1, 0, -1, 2, 0.5, -1, 0, 1};
  t[P::kEnc1B].values = {0.1, -0.2};
  t[P::kEnc2W].values = {1, -2};
  t[P::kEnc2B].values = {0.3};
  t[P::kDec1W].values = {1, 1, 1, -1, 0, 2};
  t[P::kDec1B].values = {0, 0.5};
  t[P::kDec2W].values = {2, 0, -1, 1};
  t[P::kDec2B].values = {0.1, 0.2};
  t[P::kAdvW].values = {3, -1};
  t[P::kAdvB].values = {0.5, 0};
  const Vector doc{1, -1};
  const Vector sen{2, 0.5};

  // x = [1, -1, 2, 0.5]
  const double e0 = leaky(1 * 1 + 0 * -1 + -1 * 2 + 2 * 0.5 + 0.1);  // 0.1
  const double e1 = leaky(0.5 * 1 + -1 * -1 + 0 * 2 + 1 * 0.5 - 0.2);  // 1.8
  const double z = 1.0 / (1.0 + std::exp(-(e0 - 2 * e1 + 0.3)));
  const double d0 = leaky(1 * 1 + 1 * -1 + 1 * z);
  const double d1 = leaky(-1 * 1 + 0 * -1 + 2 * z + 0.5);
  const Vector recon{2 * d0 + 0.1, -d0 + d1 + 0.2};
  const Vector adv{3 * z + 0.5, -z};

  const auto out = ae_forward(p, doc, sen);
  REQUIRE(out.latent.size() == 1);
  CHECK(out.latent[0] == doctest::Approx(z).epsilon(1e-14));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(out.recon[i] == doctest::Approx(recon[i]).epsilon(1e-14));
    CHECK(out.adv_recon[i] == doctest::Approx(adv[i]).epsilon(1e-14));
  }
  const auto again = ae_forward(p, doc, sen);
  CHECK(again.latent == out.latent);
  CHECK(again.recon == out.recon);
  CHECK(again.adv_recon == out.adv_recon);
}

TEST_CASE("loss examples") {
  const Vector v{1, 2, 3, 4};
  auto l = ae_losses(v, v, v, 0.2);
  CHECK(l.main == 0.0);
  CHECK(l.adv == 0.0);

  // recon error MSE 0.5, adversary MSE 1.0
  const Vector sen{0, 0};
  const Vector recon{1, 0};
  const Vector adv{1, -1};
  l = ae_losses(recon, adv, sen, 0.2);
  CHECK(l.adv == doctest::Approx(1.0));
  CHECK(l.main == doctest::Approx(0.3));
  CHECK(ae_losses(recon, adv, sen, 0.0).main == doctest::Approx(0.5));
  CHECK_THROWS_AS(ae_losses(Vector{1}, adv, sen, 0.2), Error);
}

TEST_CASE("latent entries lie in (0, 1)") {
  Rng rng(3);
  const auto p = init_autoencoder({5, 7, 4}, 11);
  for (int t = 0; t < 100; ++t) {
    const auto out = ae_forward(p, random_vector(rng, 5), random_vector(rng, 5));
    for (double z : out.latent) {
      CHECK(z > 0.0);
      CHECK(z < 1.0);
    }
  }
}

TEST_CASE("gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    auto p = init_autoencoder({6, 5, 3}, seed);
    const auto doc = random_vector(rng, 6);
    const auto sen = random_vector(rng, 6);
    const double lambda = 0.2;
    for (int which = 0; which < 2; ++which) {
      auto grads = p.tensors.zeros_like();
      const auto tr = ae_trace(p, doc, sen);
      if (which == 0) {
        ae_backward(p, tr, sen, 1.0, -lambda, grads);
      } else {
        ae_backward(p, tr, sen, 0.0, 1.0, grads);
      }
      const auto loss = [&] {
        const auto out = ae_forward(p, doc, sen);
        const auto l = ae_losses(out.recon, out.adv_recon, sen, lambda);
        return which == 0 ? l.main : l.adv;
      };
      const auto check = oracle::check_gradient(p.tensors, grads, loss);
      INFO("seed " << seed << " loss " << which << " worst " << check.worst_name << "[" << check.worst_index << "] "
                << check.worst_analytic << " vs " << check.worst_numeric);
      CHECK(check.worst_relative < 1e-4);
    }
  }
}

TEST_CASE("adversary loss gradient reaches only the adversary and the encoder") {
  Rng rng(1);
  const auto p = init_autoencoder({4, 3, 2}, 1);
  const auto doc = random_vector(rng, 4);
  const auto sen = random_vector(rng, 4);
  auto grads = p.tensors.zeros_like();
  ae_backward(p, ae_trace(p, doc, sen), sen, 0.0, 1.0, grads);
  for (std::size_t i : {P::kDec1W, P::kDec1B, P::kDec2W, P::kDec2B}) {
    for (double g : grads[i].values) CHECK(g == 0.0);
  }
}

TEST_CASE("optimizer groups isolate the two update steps") {
  Rng rng(2);
  auto p = init_autoencoder({4, 3, 2}, 2);
  const auto doc = random_vector(rng, 4);
  const auto sen = random_vector(rng, 4);
  const AdamConfig cfg{1e-2, 0.9, 0.999, 1e-8, 1e-3};
  Adam adversary(cfg, p.tensors, P::adversary_group());
  Adam autoencoder(cfg, p.tensors, P::autoencoder_group());

  auto grads = p.tensors.zeros_like();
  auto tr = ae_trace(p, doc, sen);
  ae_backward(p, tr, sen, 0.0, 1.0, grads);
  const auto before1 = p.tensors;
  adversary.step(p.tensors, grads);
  for (std::size_t i : P::autoencoder_group()) CHECK(p.tensors[i] == before1[i]);
  for (std::size_t i : P::adversary_group()) CHECK(p.tensors[i] != before1[i]);

  grads.set_zero();
  ae_retrace(p, tr);
  ae_backward(p, tr, sen, 1.0, -0.2, grads);
  const auto before2 = p.tensors;
  autoencoder.step(p.tensors, grads);
  for (std::size_t i : P::adversary_group()) CHECK(p.tensors[i] == before2[i]);
  for (std::size_t i : P::autoencoder_group()) CHECK(p.tensors[i] != before2[i]);
}

TEST_CASE("each training step moves only its own parameter group") {
  Rng rng(8);
  std::vector<AutoencoderPair> pairs;
  for (int i = 0; i < 20; ++i) pairs.push_back({random_vector(rng, 4), random_vector(rng, 4)});
  AETrainConfig cfg;
  cfg.hidden = 5;
  cfg.latent = 3;
  cfg.batch = 6;
  cfg.epochs = 3;
  std::size_t steps = 0;
  bool isolated = true;
  bool moved = true;
  train_autoencoder(pairs, cfg, [&](std::size_t, AEUpdateStep step, const ParameterSet& before,
                                    const ParameterSet& after) {
    ++steps;
    const auto own = step == AEUpdateStep::Adversary ? P::adversary_group() : P::autoencoder_group();
    const auto other = step == AEUpdateStep::Adversary ? P::autoencoder_group() : P::adversary_group();
    for (std::size_t i : own) moved = moved && before[i] != after[i];
    for (std::size_t i : other) isolated = isolated && before[i] == after[i];
  });
  CHECK(steps == 2 * 3 * 3);
  CHECK(isolated);
  CHECK(moved);
}

TEST_CASE("training on a linear map lowers loss_main") {
  Rng rng(7);
  std::vector<double> map(16);
  for (double& m : map) m = rng.normal() * 0.5;
  std::vector<AutoencoderPair> pairs;
  for (int i = 0; i < 80; ++i) {
    AutoencoderPair pair{random_vector(rng, 4), Vector(4, 0.0)};
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) pair.sentence[r] += map[r * 4 + c] * pair.doc[c];
    pairs.push_back(std::move(pair));
  }
  AETrainConfig cfg;
  cfg.hidden = 16;
  cfg.latent = 4;
  cfg.batch = 8;
  cfg.epochs = 50;
  cfg.patience = 0;
  cfg.validation_fraction = 0.0;
  const auto result = train_autoencoder(pairs, cfg);
  CHECK(result.history.size() == 50);
  const double final_main = ae_mean_losses(result.params, pairs, cfg.lambda).main;
  CHECK(final_main < result.initial_main);
  CHECK(result.params.tensors.all_finite());
}

TEST_CASE("a single pair is reconstructed when the penalty is off") {
  Rng rng(9);
  std::vector<AutoencoderPair> pairs{{random_vector(rng, 4), random_vector(rng, 4)}};
  AETrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.dropout = 0.0;
  cfg.weight_decay = 0.0;
  cfg.lr = 1e-2;
  cfg.hidden = 8;
  cfg.latent = 3;
  cfg.epochs = 1000;
  cfg.patience = 0;
  cfg.validation_fraction = 0.0;
  const auto result = train_autoencoder(pairs, cfg);
  const auto out = ae_forward(result.params, pairs[0].doc, pairs[0].sentence);
  CHECK(ae_losses(out.recon, out.adv_recon, pairs[0].sentence, 0.0).main < 1e-3);
}

TEST_CASE("training is deterministic per seed") {
  Rng rng(4);
  std::vector<AutoencoderPair> pairs;
  for (int i = 0; i < 30; ++i) pairs.push_back({random_vector(rng, 3), random_vector(rng, 3)});
  AETrainConfig cfg;
  cfg.hidden = 6;
  cfg.latent = 2;
  cfg.batch = 7;
  cfg.epochs = 5;
  cfg.seed = 42;
  const auto a = train_autoencoder(pairs, cfg);
  const auto b = train_autoencoder(pairs, cfg);
  CHECK(a.params.tensors == b.params.tensors);
  CHECK(a.best_epoch == b.best_epoch);
  cfg.seed = 43;
  CHECK(train_autoencoder(pairs, cfg).params.tensors != a.params.tensors);
}

TEST_CASE("training rejects bad input") {
  AETrainConfig cfg;
  CHECK_THROWS_AS(train_autoencoder({}, cfg), Error);
  std::vector<AutoencoderPair> pairs{{Vector{1, 2}, Vector{3, 4}}};
  cfg.lambda = -1;
  CHECK_THROWS_AS(train_autoencoder(pairs, cfg), Error);
  cfg.lambda = 0.2;
  cfg.lr = 0;
  CHECK_THROWS_AS(train_autoencoder(pairs, cfg), Error);
  cfg.lr = 1e300;
  cfg.epochs = 3;
  pairs[0].sentence = {1e300, -1e300};
  CHECK_THROWS_WITH_AS(train_autoencoder(pairs, cfg), doctest::Contains("batch"), Error);
}

TEST_CASE("checkpoint round trip keeps float32 values") {
  fixture::TempDir dir;
  const auto p = init_autoencoder({3, 4, 2}, 5);
  save_autoencoder(dir / "ae.ckpt", p, {{"seed", 5}});
  const auto q = load_autoencoder(dir / "ae.ckpt");
  CHECK(q.dims == p.dims);
  REQUIRE(q.tensors.same_layout(p.tensors));
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    for (std::size_t j = 0; j < p.tensors[i].values.size(); ++j) {
      CHECK(q.tensors[i].values[j] == static_cast<double>(static_cast<float>(p.tensors[i].values[j])));
    }
  }
  CHECK_THROWS(load_autoencoder(dir / "missing.ckpt"));
}
