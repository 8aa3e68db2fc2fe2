#include "ctrlsum/autoencoder.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "ctrlsum/checkpoint.hpp"
#include "ctrlsum/error.hpp"
#include "ctrlsum/kernels.hpp"

namespace ctrlsum {
namespace {

using P = AutoencoderParams;

double leaky(double x) { return x > 0.0 ? x : kLeakyReluSlope * x; }
double leaky_grad(double x) { return x > 0.0 ? 1.0 : kLeakyReluSlope; }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// out = W x + b
void affine(const ParameterSet& t, std::size_t w, std::size_t b, std::span<const double> x, Vector& out) {
  out.assign(t[b].values.begin(), t[b].values.end());
  kernels::gemv(t[w].values, t[w].rows(), t[w].cols(), x, out);
}

double mse(std::span<const double> a, std::span<const double> b) {
  return kernels::squared_distance(a, b) / static_cast<double>(a.size());
}

void check_inputs(const AutoencoderParams& params, std::span<const double> v_doc, std::span<const double> v_sen) {
  if (v_doc.size() != params.dims.input || v_sen.size() != params.dims.input) {
    throw Error("autoencoder: input dimension mismatch (expected " + std::to_string(params.dims.input) + ")");
  }
}

void run_layers(const AutoencoderParams& params, AutoencoderTrace& tr) {
  const auto& t = params.tensors;
  const std::size_t d = params.dims.input;
  affine(t, P::kEnc1W, P::kEnc1B, tr.input, tr.enc_pre);
  tr.h_enc.resize(tr.enc_pre.size());
  for (std::size_t i = 0; i < tr.h_enc.size(); ++i) tr.h_enc[i] = leaky(tr.enc_pre[i]) * tr.enc_mask[i];
  affine(t, P::kEnc2W, P::kEnc2B, tr.h_enc, tr.latent);
  for (double& v : tr.latent) v = sigmoid(v);
  tr.dec_input.assign(tr.input.begin(), tr.input.begin() + static_cast<std::ptrdiff_t>(d));
  tr.dec_input.insert(tr.dec_input.end(), tr.latent.begin(), tr.latent.end());
  affine(t, P::kDec1W, P::kDec1B, tr.dec_input, tr.dec_pre);
  tr.h_dec.resize(tr.dec_pre.size());
  for (std::size_t i = 0; i < tr.h_dec.size(); ++i) tr.h_dec[i] = leaky(tr.dec_pre[i]) * tr.dec_mask[i];
  affine(t, P::kDec2W, P::kDec2B, tr.h_dec, tr.recon);
  affine(t, P::kAdvW, P::kAdvB, tr.latent, tr.adv_recon);
}

Vector dropout_mask(std::size_t n, double rate, Rng* rng) {
  Vector mask(n, 1.0);
  if (rng == nullptr || rate <= 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng->bernoulli(rate) ? 0.0 : keep_scale;
  return mask;
}

}  // namespace

AutoencoderParams make_autoencoder(AutoencoderDims dims) {
  if (dims.input == 0 || dims.hidden == 0 || dims.latent == 0) throw Error("autoencoder: zero dimension");
  AutoencoderParams p;
  p.dims = dims;
  auto& t = p.tensors;
  t.add("enc1.weight", {dims.hidden, 2 * dims.input});
  t.add("enc1.bias", {dims.hidden});
  t.add("enc2.weight", {dims.latent, dims.hidden});
  t.add("enc2.bias", {dims.latent});
  t.add("dec1.weight", {dims.hidden, dims.input + dims.latent});
  t.add("dec1.bias", {dims.hidden});
  t.add("dec2.weight", {dims.input, dims.hidden});
  t.add("dec2.bias", {dims.input});
  t.add("adv.weight", {dims.input, dims.latent});
  t.add("adv.bias", {dims.input});
  return p;
}

AutoencoderParams init_autoencoder(AutoencoderDims dims, std::uint64_t seed) {
  auto p = make_autoencoder(dims);
  Rng rng(seed);
  for (std::size_t w = 0; w < P::kCount; w += 2) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.tensors[w].cols()));
    for (double& v : p.tensors[w].values) v = rng.uniform(-bound, bound);
    for (double& v : p.tensors[w + 1].values) v = rng.uniform(-bound, bound);
  }
  return p;
}

AutoencoderTrace ae_trace(const AutoencoderParams& params, std::span<const double> v_doc,
                          std::span<const double> v_sen, double dropout, Rng* rng) {
  check_inputs(params, v_doc, v_sen);
  AutoencoderTrace tr;
  tr.input.assign(v_doc.begin(), v_doc.end());
  tr.input.insert(tr.input.end(), v_sen.begin(), v_sen.end());
  tr.enc_mask = dropout_mask(params.dims.hidden, dropout, rng);
  tr.dec_mask = dropout_mask(params.dims.hidden, dropout, rng);
  run_layers(params, tr);
  return tr;
}

void ae_retrace(const AutoencoderParams& params, AutoencoderTrace& trace) { run_layers(params, trace); }

AutoencoderOutput ae_forward(const AutoencoderParams& params, std::span<const double> v_doc,
                             std::span<const double> v_sen) {
  auto tr = ae_trace(params, v_doc, v_sen);
  return {std::move(tr.latent), std::move(tr.recon), std::move(tr.adv_recon)};
}

AutoencoderLosses ae_losses(std::span<const double> recon, std::span<const double> adv_recon,
                            std::span<const double> v_sen, double lambda) {
  if (recon.size() != v_sen.size() || adv_recon.size() != v_sen.size() || v_sen.empty()) {
    throw Error("ae_losses: dimension mismatch");
  }
  AutoencoderLosses out;
  out.adv = mse(adv_recon, v_sen);
  out.main = mse(recon, v_sen) - lambda * out.adv;
  return out;
}

void ae_backward(const AutoencoderParams& params, const AutoencoderTrace& tr, std::span<const double> v_sen,
                 double recon_weight, double adv_weight, ParameterSet& grads) {
  const auto& t = params.tensors;
  const std::size_t d = params.dims.input;
  const std::size_t h = params.dims.hidden;
  const std::size_t l = params.dims.latent;
  const double scale = 2.0 / static_cast<double>(d);

  Vector d_recon(d);
  Vector d_adv(d);
  for (std::size_t i = 0; i < d; ++i) {
    d_recon[i] = recon_weight * scale * (tr.recon[i] - v_sen[i]);
    d_adv[i] = adv_weight * scale * (tr.adv_recon[i] - v_sen[i]);
  }
  Vector d_latent(l, 0.0);

  // adv = W5 latent + b5
  kernels::rank1_update(grads[P::kAdvW].values, d, l, 1.0, d_adv, tr.latent);
  kernels::axpy(1.0, d_adv, grads[P::kAdvB].values);
  kernels::gemv_t(t[P::kAdvW].values, d, l, d_adv, d_latent);

  // recon = W4 h_dec + b4
  kernels::rank1_update(grads[P::kDec2W].values, d, h, 1.0, d_recon, tr.h_dec);
  kernels::axpy(1.0, d_recon, grads[P::kDec2B].values);
  Vector d_hdec(h, 0.0);
  kernels::gemv_t(t[P::kDec2W].values, d, h, d_recon, d_hdec);
  for (std::size_t i = 0; i < h; ++i) d_hdec[i] *= tr.dec_mask[i] * leaky_grad(tr.dec_pre[i]);

  // h_dec = LeakyReLU(W3 [v_doc; latent] + b3)
  kernels::rank1_update(grads[P::kDec1W].values, h, d + l, 1.0, d_hdec, tr.dec_input);
  kernels::axpy(1.0, d_hdec, grads[P::kDec1B].values);
  Vector d_dec_input(d + l, 0.0);
  kernels::gemv_t(t[P::kDec1W].values, h, d + l, d_hdec, d_dec_input);
  for (std::size_t i = 0; i < l; ++i) d_latent[i] += d_dec_input[d + i];

  // latent = Sigmoid(W2 h_enc + b2)
  Vector d_z2(l);
  for (std::size_t i = 0; i < l; ++i) d_z2[i] = d_latent[i] * tr.latent[i] * (1.0 - tr.latent[i]);
  kernels::rank1_update(grads[P::kEnc2W].values, l, h, 1.0, d_z2, tr.h_enc);
  kernels::axpy(1.0, d_z2, grads[P::kEnc2B].values);
  Vector d_henc(h, 0.0);
  kernels::gemv_t(t[P::kEnc2W].values, l, h, d_z2, d_henc);
  for (std::size_t i = 0; i < h; ++i) d_henc[i] *= tr.enc_mask[i] * leaky_grad(tr.enc_pre[i]);

  // h_enc = LeakyReLU(W1 [v_doc; v_sen] + b1)
  kernels::rank1_update(grads[P::kEnc1W].values, h, 2 * d, 1.0, d_henc, tr.input);
  kernels::axpy(1.0, d_henc, grads[P::kEnc1B].values);
}

AutoencoderLosses ae_mean_losses(const AutoencoderParams& params, std::span<const AutoencoderPair> pairs,
                                 double lambda) {
  AutoencoderLosses total;
  if (pairs.empty()) return total;
  for (const auto& pair : pairs) {
    const auto out = ae_forward(params, pair.doc, pair.sentence);
    const auto l = ae_losses(out.recon, out.adv_recon, pair.sentence, lambda);
    total.main += l.main;
    total.adv += l.adv;
  }
  total.main /= static_cast<double>(pairs.size());
  total.adv /= static_cast<double>(pairs.size());
  return total;
}

AutoencoderTrainResult train_autoencoder(std::span<const AutoencoderPair> pairs, const AETrainConfig& config,
                                         const AEStepObserver& observer) {
  if (pairs.empty()) throw Error("train_autoencoder: no training pairs");
  if (config.lambda < 0.0) throw Error("train_autoencoder: lambda must be >= 0");
  if (config.lr <= 0.0) throw Error("train_autoencoder: lr must be > 0");
  if (config.batch == 0 || config.epochs == 0) throw Error("train_autoencoder: batch and epochs must be >= 1");

  const std::size_t d = pairs.front().doc.size();
  Rng rng(config.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(pairs.size())));
  std::vector<AutoencoderPair> train;
  std::vector<AutoencoderPair> validation;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - n_val ? train : validation).push_back(pairs[order[i]]);
  }

  AutoencoderTrainResult result;
  result.params = init_autoencoder({d, config.hidden, config.latent}, rng.next());
  result.initial_main = ae_mean_losses(result.params, train, config.lambda).main;

  AdamConfig adam{config.lr, 0.9, 0.999, 1e-8, config.weight_decay};
  Adam adversary_opt(adam, result.params.tensors, P::adversary_group());
  Adam autoencoder_opt(adam, result.params.tensors, P::autoencoder_group());
  auto grads = result.params.tensors.zeros_like();

  double best_val = std::numeric_limits<double>::infinity();
  AutoencoderParams best = result.params;
  std::size_t since_best = 0;
  std::vector<std::size_t> train_order(train.size());
  std::iota(train_order.begin(), train_order.end(), std::size_t{0});
  std::size_t batch_index = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(train_order);
    AutoencoderEpoch stats;
    for (std::size_t start = 0; start < train_order.size(); start += config.batch, ++batch_index) {
      const std::size_t end = std::min(start + config.batch, train_order.size());
      const double inv = 1.0 / static_cast<double>(end - start);
      std::vector<AutoencoderTrace> traces;
      for (std::size_t i = start; i < end; ++i) {
        const auto& pair = train[train_order[i]];
        traces.push_back(ae_trace(result.params, pair.doc, pair.sentence, config.dropout, &rng));
      }

      // Step 1: adversary on loss_adv.
      grads.set_zero();
      double batch_adv = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& pair = train[train_order[i]];
        const auto& tr = traces[i - start];
        batch_adv += ae_losses(tr.recon, tr.adv_recon, pair.sentence, config.lambda).adv;
        ae_backward(result.params, tr, pair.sentence, 0.0, inv, grads);
      }
      if (!std::isfinite(batch_adv)) {
        throw Error("train_autoencoder: non-finite adversary loss at batch " + std::to_string(batch_index));
      }
      const auto before_adv = observer ? result.params.tensors : ParameterSet{};
      adversary_opt.step(result.params.tensors, grads);
      if (observer) observer(batch_index, AEUpdateStep::Adversary, before_adv, result.params.tensors);

      // Step 2: encoder and decoder on loss_main, against the updated adversary.
      grads.set_zero();
      double batch_main = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& pair = train[train_order[i]];
        auto& tr = traces[i - start];
        ae_retrace(result.params, tr);
        batch_main += ae_losses(tr.recon, tr.adv_recon, pair.sentence, config.lambda).main;
        ae_backward(result.params, tr, pair.sentence, inv, -config.lambda * inv, grads);
      }
      if (!std::isfinite(batch_main)) {
        throw Error("train_autoencoder: non-finite loss at batch " + std::to_string(batch_index));
      }
      const auto before_main = observer ? result.params.tensors : ParameterSet{};
      autoencoder_opt.step(result.params.tensors, grads);
      if (observer) observer(batch_index, AEUpdateStep::Autoencoder, before_main, result.params.tensors);
      stats.train_main += batch_main;
      stats.train_adv += batch_adv;
    }
    stats.train_main /= static_cast<double>(train.size());
    stats.train_adv /= static_cast<double>(train.size());

    if (validation.empty()) {
      result.history.push_back(stats);
      best = result.params;
      result.best_epoch = epoch;
      continue;
    }
    stats.validation_main = ae_mean_losses(result.params, validation, config.lambda).main;
    result.history.push_back(stats);
    if (stats.validation_main < best_val) {
      best_val = stats.validation_main;
      best = result.params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

void save_autoencoder(const std::filesystem::path& path, const AutoencoderParams& params,
                      const nlohmann::json& metadata) {
  nlohmann::json header = metadata;
  header["model"] = "adversarial-autoencoder";
  header["dims"] = {{"input", params.dims.input}, {"hidden", params.dims.hidden}, {"latent", params.dims.latent}};
  header["leaky_relu_slope"] = kLeakyReluSlope;
  write_checkpoint(path, std::move(header), params.tensors);
}

AutoencoderParams load_autoencoder(const std::filesystem::path& path) {
  auto ckpt = read_checkpoint(path);
  try {
    if (ckpt.header.at("model") != "adversarial-autoencoder") throw Error("not an autoencoder checkpoint: " + path.string());
    const auto& dims = ckpt.header.at("dims");
    auto params = make_autoencoder({dims.at("input").get<std::size_t>(), dims.at("hidden").get<std::size_t>(),
                                    dims.at("latent").get<std::size_t>()});
    if (!params.tensors.same_layout(ckpt.tensors)) throw Error("autoencoder checkpoint layout mismatch: " + path.string());
    params.tensors = std::move(ckpt.tensors);
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt autoencoder checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace ctrlsum
