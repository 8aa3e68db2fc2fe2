#pragma once

// Adversarial autoencoder over (document vector, sentence vector) pairs.
//
//   h_enc  = LeakyReLU(W1 [v_doc; v_sen] + b1)
//   latent = Sigmoid(W2 h_enc + b2)
//   h_dec  = LeakyReLU(W3 [v_doc; latent] + b3)
//   recon  = W4 h_dec + b4
//   adv    = W5 latent + b5
//
//   loss_adv  = MSE(adv, v_sen)
//   loss_main = MSE(recon, v_sen) - lambda * loss_adv
//
// Training alternates per batch: the adversary (W5, b5) steps on loss_adv,
// then encoder and decoder step on loss_main. Dropout acts on h_enc and h_dec
// during training only.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "ctrlsum/embeddings.hpp"
#include "ctrlsum/parameters.hpp"
#include "ctrlsum/rng.hpp"

namespace ctrlsum {

struct AutoencoderDims {
  std::size_t input = 0;  // d, size of v_doc and of v_sen
  std::size_t hidden = 256;
  std::size_t latent = 10;

  friend bool operator==(const AutoencoderDims&, const AutoencoderDims&) = default;
};

inline constexpr double kLeakyReluSlope = 0.01;

struct AutoencoderParams {
  AutoencoderDims dims;
  /// enc1.{weight,bias}, enc2.*, dec1.*, dec2.*, adv.* in that order.
  ParameterSet tensors;

  enum Index : std::size_t {
    kEnc1W, kEnc1B, kEnc2W, kEnc2B, kDec1W, kDec1B, kDec2W, kDec2B, kAdvW, kAdvB, kCount
  };

  static std::vector<std::size_t> adversary_group() { return {kAdvW, kAdvB}; }
  static std::vector<std::size_t> autoencoder_group() {
    return {kEnc1W, kEnc1B, kEnc2W, kEnc2B, kDec1W, kDec1B, kDec2W, kDec2B};
  }
};

/// All-zero parameters with consistent shapes.
AutoencoderParams make_autoencoder(AutoencoderDims dims);
/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
AutoencoderParams init_autoencoder(AutoencoderDims dims, std::uint64_t seed);

struct AutoencoderOutput {
  Vector latent;
  Vector recon;
  Vector adv_recon;
};

/// Evaluation-mode forward pass (no dropout). Throws Error on dimension mismatch.
AutoencoderOutput ae_forward(const AutoencoderParams& params, std::span<const double> v_doc,
                             std::span<const double> v_sen);

struct AutoencoderLosses {
  double main = 0.0;
  double adv = 0.0;
};

AutoencoderLosses ae_losses(std::span<const double> recon, std::span<const double> adv_recon,
                            std::span<const double> v_sen, double lambda);

/// Forward state kept for the backward pass.
struct AutoencoderTrace {
  Vector input;       // [v_doc; v_sen]
  Vector enc_pre;     // W1 x + b1
  Vector enc_mask;    // dropout multipliers (1 in evaluation mode)
  Vector h_enc;
  Vector latent;
  Vector dec_input;   // [v_doc; latent]
  Vector dec_pre;
  Vector dec_mask;
  Vector h_dec;
  Vector recon;
  Vector adv_recon;
};

/// Forward pass recording intermediates. With `rng` set, inverted dropout at
/// `dropout` is applied to both hidden layers.
AutoencoderTrace ae_trace(const AutoencoderParams& params, std::span<const double> v_doc,
                          std::span<const double> v_sen, double dropout = 0.0, Rng* rng = nullptr);

/// Recomputes the layers after the dropout masks in `trace` using `params`.
void ae_retrace(const AutoencoderParams& params, AutoencoderTrace& trace);

/// Accumulates into `grads` the gradient of
///   recon_weight * MSE(recon, v_sen) + adv_weight * MSE(adv, v_sen)
/// with respect to every tensor. loss_main is (1, -lambda), loss_adv is (0, 1).
void ae_backward(const AutoencoderParams& params, const AutoencoderTrace& trace, std::span<const double> v_sen,
                 double recon_weight, double adv_weight, ParameterSet& grads);

struct AutoencoderPair {
  DocumentVector doc;
  SentenceVector sentence;
};

struct AETrainConfig {
  double lambda = 0.2;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  std::size_t batch = 64;
  double dropout = 0.1;
  std::size_t epochs = 50;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 5;
  /// Fraction of pairs held out for early stopping (none if it rounds to 0).
  double validation_fraction = 0.1;
  std::size_t hidden = 256;
  std::size_t latent = 10;
  std::uint64_t seed = 0;
};

struct AutoencoderEpoch {
  double train_main = 0.0;
  double train_adv = 0.0;
  double validation_main = 0.0;
};

struct AutoencoderTrainResult {
  AutoencoderParams params;
  std::vector<AutoencoderEpoch> history;
  std::size_t best_epoch = 0;
  /// loss_main over the training pairs before any update (evaluation mode).
  double initial_main = 0.0;
};

/// Mean losses over pairs in evaluation mode.
AutoencoderLosses ae_mean_losses(const AutoencoderParams& params, std::span<const AutoencoderPair> pairs,
                                 double lambda);

enum class AEUpdateStep { Adversary, Autoencoder };

/// Called after every optimizer step with the parameters before and after it.
using AEStepObserver =
    std::function<void(std::size_t batch, AEUpdateStep step, const ParameterSet& before, const ParameterSet& after)>;

/// Throws Error on empty input or a non-finite batch loss (naming the batch).
AutoencoderTrainResult train_autoencoder(std::span<const AutoencoderPair> pairs, const AETrainConfig& config,
                                         const AEStepObserver& observer = {});

void save_autoencoder(const std::filesystem::path& path, const AutoencoderParams& params,
                      const nlohmann::json& metadata);
AutoencoderParams load_autoencoder(const std::filesystem::path& path);

}  // namespace ctrlsum
