#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ocvit/ops.hpp"
#include "ocvit/param_store.hpp"
#include "ocvit/rng.hpp"
#include "ocvit/tensor.hpp"

namespace ocvit {

struct EncoderConfig {
  std::size_t image_size = 32;  // H == W
  std::size_t channels = 1;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t depth = 2;  // encoder block count
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;  // hidden expansion in the block MLP
  std::size_t latent_dim = 64;
  double ln_eps = 1e-5;
  double in_eps = 1e-5;

  std::size_t patches_per_side() const { return image_size / patch_size; }
  std::size_t num_patches() const {
    return patches_per_side() * patches_per_side();
  }
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const {
    return channels * patch_size * patch_size;
  }

  void validate() const;
};

/// The small test-scale configuration used throughout the suites.
EncoderConfig vit_tiny_test_config();

struct BlockParams {
  Tensor ln1_gamma, ln1_beta;
  MsaParams attn;
  Tensor ln2_gamma, ln2_beta;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

struct VitParams {
  Tensor patch_w, patch_b;  // [C*P*P, E], [E]
  Tensor cls;               // [1, E]
  Tensor pos;               // [T+1, E]
  std::vector<BlockParams> blocks;
  Tensor lnf_gamma, lnf_beta;
  Tensor latent_w, latent_b;  // [E, D], [D]
};

struct LatentBatch {
  Tensor features;  // [B, D]
  bool normalized = false;
};

/// Registers freshly initialized extractor parameters under the "enc." /
/// "latent." name scheme. Linear weights, the CLS token and the positional
/// table draw from N(0, 0.02^2) (quantized through f32); biases are zero,
/// norm scales one.
void init_encoder_params(const EncoderConfig& cfg, ParamStore& store,
                         Rng& rng);

/// Collects parameter handles by name; shapes are validated against cfg.
VitParams collect_encoder(const ParamStore& store, const EncoderConfig& cfg);

/// Non-overlapping P x P patches in raster order, each flattened region
/// mapped by the shared linear projection to E dims.
Tensor patchify(const Tensor& image, const EncoderConfig& cfg,
                const Tensor& patch_w, const Tensor& patch_b);

/// Row 0 = cls, rows 1..T = patches, plus the positional table elementwise.
Tensor build_tokens(const Tensor& patches, const Tensor& cls,
                    const Tensor& pos);

/// x + MSA(LN(x)), then + MLP(LN(.)) where MLP = linear, GELU, linear.
Tensor encoder_block(const Tensor& tokens, const BlockParams& p,
                     std::size_t heads, double ln_eps);

/// Full extraction: patchify, tokens, blocks, final LN, CLS row, latent
/// projection, per-row instance normalization.
LatentBatch extract_latent(std::span<const Tensor> images,
                           const EncoderConfig& cfg, const VitParams& params);

/// Freezes every "enc." parameter; the latent projection stays trainable.
/// Idempotent. Parameters outside the encoder are left as they are.
void freeze_backbone(ParamStore& store);

}  // namespace ocvit
