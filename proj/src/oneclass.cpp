#include "ocvit/oneclass.hpp"

#include <cmath>
#include <string>

#include "ocvit/errors.hpp"

namespace ocvit {

void NoiseConfig::validate() const {
  if (!(sigma2 > 0.0)) {
    throw ConfigError("noise config: sigma2 must be positive, got " +
                      std::to_string(sigma2));
  }
  if (dim < 1) throw ConfigError("noise config: dim must be >= 1");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train config: lr must be positive");
  if (weight_decay < 0.0) {
    throw ConfigError("train config: weight decay must be >= 0");
  }
  noise.validate();
}

Tensor sample_pseudo_negatives(Rng& rng, std::size_t batch,
                               const NoiseConfig& noise) {
  noise.validate();
  if (batch < 1) throw ConfigError("pseudo-negatives: batch must be >= 1");
  Tensor out({batch, noise.dim});
  rng.fill_gaussian(out.data(), noise.mu, std::sqrt(noise.sigma2));
  return out;
}

std::pair<Tensor, std::vector<int>> assemble_batch(const LatentBatch& latent,
                                                   const Tensor& noise) {
  const Tensor& feat = latent.features;
  if (feat.ndim() != 2 || noise.ndim() != 2 ||
      feat.rows() != noise.rows() || feat.cols() != noise.cols()) {
    throw ShapeError("assemble_batch: latent " + feat.shape_str() +
                     " vs noise " + noise.shape_str());
  }
  std::size_t b = feat.rows();
  std::vector<Tensor> parts = {feat, noise};
  Tensor stacked = concat_rows(parts);
  std::vector<int> labels(2 * b, 0);
  for (std::size_t i = b; i < 2 * b; ++i) labels[i] = 1;
  return {std::move(stacked), std::move(labels)};
}

TrainHistory train(ParamStore& store, const EncoderConfig& enc_cfg,
                   std::size_t head_depth, std::span<const Tensor> images,
                   const TrainConfig& cfg) {
  cfg.validate();
  enc_cfg.validate();
  if (cfg.noise.dim != enc_cfg.latent_dim) {
    throw ConfigError("train: noise dim " + std::to_string(cfg.noise.dim) +
                      " must equal latent dim " +
                      std::to_string(enc_cfg.latent_dim));
  }
  std::size_t steps_per_epoch = images.size() / cfg.batch_size;
  if (steps_per_epoch == 0) {
    throw TrainError("train: " + std::to_string(images.size()) +
                     " images cannot fill one batch of " +
                     std::to_string(cfg.batch_size));
  }

  VitParams params = collect_encoder(store, enc_cfg);
  FcHead head = collect_fc_head(store, enc_cfg.latent_dim, head_depth);
  AdamConfig adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;

  Rng rng(cfg.seed);
  TrainHistory history;
  std::vector<std::size_t> order = iota_indices(images.size());
  std::vector<Tensor> batch(cfg.batch_size);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        batch[i] = images[order[s * cfg.batch_size + i]];
      }
      LatentBatch latent = extract_latent(batch, enc_cfg, params);
      Tensor noise = sample_pseudo_negatives(rng, cfg.batch_size, cfg.noise);
      auto [features, labels] = assemble_batch(latent, noise);
      Tensor logits = fc_forward(features, head);
      Tensor loss = bce_softmax_loss(logits, labels);
      double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw TrainError("train: non-finite loss " +
                         std::to_string(loss_value) + " at step " +
                         std::to_string(history.step_loss.size() + 1));
      }
      store.zero_grads();
      backward(loss);
      adam_step(store, adam);

      history.step_loss.push_back(loss_value);
      history.step_epoch.push_back(epoch);
      epoch_sum += loss_value;
      for (std::size_t r = 0; r < labels.size(); ++r) {
        int pred = logits.at(r, 1) > logits.at(r, 0) ? 1 : 0;
        correct += pred == labels[r];
        ++seen;
      }
    }
    history.epoch_loss.push_back(epoch_sum /
                                 static_cast<double>(steps_per_epoch));
    history.epoch_accuracy.push_back(static_cast<double>(correct) /
                                     static_cast<double>(seen));
  }
  quantize_f32(store);
  return history;
}

double anomaly_score(const Tensor& image, const EncoderConfig& cfg,
                     const VitParams& params, const FcHead& head) {
  std::vector<Tensor> one = {image};
  return anomaly_scores(one, cfg, params, head)[0];
}

std::vector<double> anomaly_scores(std::span<const Tensor> images,
                                   const EncoderConfig& cfg,
                                   const VitParams& params,
                                   const FcHead& head) {
  NoGradGuard no_grad;
  LatentBatch latent = extract_latent(images, cfg, params);
  Tensor probs = softmax(fc_forward(latent.features, head));
  std::vector<double> out(images.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = probs.at(i, 1);
  return out;
}

}  // namespace ocvit
