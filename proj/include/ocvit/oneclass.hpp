#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ocvit/encoder.hpp"
#include "ocvit/heads.hpp"
#include "ocvit/ops.hpp"
#include "ocvit/param_store.hpp"
#include "ocvit/rng.hpp"

namespace ocvit {

struct NoiseConfig {
  double mu = 0.0;
  double sigma2 = 0.01;  // per-dimension variance
  std::size_t dim = 0;

  void validate() const;
};

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 1;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  NoiseConfig noise;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> step_loss;
  std::vector<std::size_t> step_epoch;
  std::vector<double> epoch_loss;      // mean over the epoch's steps
  std::vector<double> epoch_accuracy;  // feature-vs-noise argmax accuracy
};

/// B x D matrix of i.i.d. N(mu, sigma2) entries via Box-Muller on the
/// deterministic generator: D independent 1-D Gaussians per row.
Tensor sample_pseudo_negatives(Rng& rng, std::size_t batch,
                               const NoiseConfig& noise);

/// Rows 0..B-1 = latent features labeled 0 (target class), rows B..2B-1 =
/// noise labeled 1 (pseudo-negative).
std::pair<Tensor, std::vector<int>> assemble_batch(const LatentBatch& latent,
                                                   const Tensor& noise);

/// One-class training: per step extract latents, draw fresh pseudo-negatives,
/// assemble the 2B batch, head forward, BCE through softmax, backward, Adam
/// on the trainable parameters. Epoch order is a seeded shuffle; incomplete
/// final batches are dropped. Fully deterministic given cfg.seed. On return
/// the trainable parameters are quantized through f32 so the in-memory model
/// matches its checkpoint bit-for-bit.
TrainHistory train(ParamStore& store, const EncoderConfig& enc_cfg,
                   std::size_t head_depth, std::span<const Tensor> images,
                   const TrainConfig& cfg);

/// Softmax probability of the pseudo-negative class for one image.
double anomaly_score(const Tensor& image, const EncoderConfig& cfg,
                     const VitParams& params, const FcHead& head);

std::vector<double> anomaly_scores(std::span<const Tensor> images,
                                   const EncoderConfig& cfg,
                                   const VitParams& params,
                                   const FcHead& head);

}  // namespace ocvit
