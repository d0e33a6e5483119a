#include "ocvit/encoder.hpp"

#include <string>

#include "ocvit/errors.hpp"

namespace ocvit {

namespace {

std::string block_name(std::size_t i, const char* sub) {
  return "enc.block" + std::to_string(i) + "." + sub;
}

Tensor gaussian_param(std::vector<std::size_t> shape, Rng& rng, double sigma) {
  Tensor t(std::move(shape));
  rng.fill_gaussian(t.data(), 0.0, sigma);
  return t;
}

const Tensor& fetch(const ParamStore& store, const std::string& name,
                    std::vector<std::size_t> shape) {
  if (!store.contains(name)) {
    throw ConfigError("encoder: missing parameter '" + name + "'");
  }
  const Tensor& t = store.get(name);
  if (t.shape() != shape) {
    throw ConfigError("encoder: parameter '" + name + "' has shape " +
                      t.shape_str() + ", expected " + shape_to_string(shape));
  }
  return t;
}

}  // namespace

void EncoderConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || channels == 0) {
    throw ConfigError("encoder config: zero image, patch, or channel size");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("encoder config: image size " +
                      std::to_string(image_size) +
                      " not divisible by patch size " +
                      std::to_string(patch_size));
  }
  if (heads == 0 || embed_dim % heads != 0) {
    throw ConfigError("encoder config: embed dim " + std::to_string(embed_dim) +
                      " not divisible by head count " + std::to_string(heads));
  }
  if (depth < 1) throw ConfigError("encoder config: depth must be >= 1");
  if (latent_dim < 1) throw ConfigError("encoder config: latent dim must be >= 1");
  if (mlp_ratio < 1) throw ConfigError("encoder config: mlp ratio must be >= 1");
}

EncoderConfig vit_tiny_test_config() {
  EncoderConfig cfg;
  cfg.image_size = 32;
  cfg.channels = 1;
  cfg.patch_size = 8;
  cfg.embed_dim = 64;
  cfg.depth = 2;
  cfg.heads = 4;
  cfg.mlp_ratio = 4;
  cfg.latent_dim = 64;
  return cfg;
}

void init_encoder_params(const EncoderConfig& cfg, ParamStore& store,
                         Rng& rng) {
  cfg.validate();
  const double sigma = 0.02;
  std::size_t e = cfg.embed_dim;
  std::size_t hidden = cfg.mlp_ratio * e;

  store.add("enc.patch.w", gaussian_param({cfg.patch_dim(), e}, rng, sigma));
  store.add("enc.patch.b", Tensor({e}));
  store.add("enc.cls", gaussian_param({1, e}, rng, sigma));
  store.add("enc.pos", gaussian_param({cfg.num_tokens(), e}, rng, sigma));
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    store.add(block_name(i, "ln1.gamma"), Tensor({e}, std::vector<double>(e, 1.0)));
    store.add(block_name(i, "ln1.beta"), Tensor({e}));
    store.add(block_name(i, "attn.wq"), gaussian_param({e, e}, rng, sigma));
    store.add(block_name(i, "attn.bq"), Tensor({e}));
    store.add(block_name(i, "attn.wk"), gaussian_param({e, e}, rng, sigma));
    store.add(block_name(i, "attn.bk"), Tensor({e}));
    store.add(block_name(i, "attn.wv"), gaussian_param({e, e}, rng, sigma));
    store.add(block_name(i, "attn.bv"), Tensor({e}));
    store.add(block_name(i, "attn.wo"), gaussian_param({e, e}, rng, sigma));
    store.add(block_name(i, "attn.bo"), Tensor({e}));
    store.add(block_name(i, "ln2.gamma"), Tensor({e}, std::vector<double>(e, 1.0)));
    store.add(block_name(i, "ln2.beta"), Tensor({e}));
    store.add(block_name(i, "mlp.fc1.w"), gaussian_param({e, hidden}, rng, sigma));
    store.add(block_name(i, "mlp.fc1.b"), Tensor({hidden}));
    store.add(block_name(i, "mlp.fc2.w"), gaussian_param({hidden, e}, rng, sigma));
    store.add(block_name(i, "mlp.fc2.b"), Tensor({e}));
  }
  store.add("enc.lnf.gamma", Tensor({e}, std::vector<double>(e, 1.0)));
  store.add("enc.lnf.beta", Tensor({e}));
  store.add("latent.w", gaussian_param({e, cfg.latent_dim}, rng, sigma));
  store.add("latent.b", Tensor({cfg.latent_dim}));

  for (const std::string& name : store.names()) {
    if (name.rfind("enc.", 0) == 0 || name.rfind("latent.", 0) == 0) {
      quantize_f32(store.get(name));
    }
  }
}

VitParams collect_encoder(const ParamStore& store, const EncoderConfig& cfg) {
  cfg.validate();
  std::size_t e = cfg.embed_dim;
  std::size_t hidden = cfg.mlp_ratio * e;
  VitParams p;
  p.patch_w = fetch(store, "enc.patch.w", {cfg.patch_dim(), e});
  p.patch_b = fetch(store, "enc.patch.b", {e});
  p.cls = fetch(store, "enc.cls", {1, e});
  p.pos = fetch(store, "enc.pos", {cfg.num_tokens(), e});
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    BlockParams b;
    b.ln1_gamma = fetch(store, block_name(i, "ln1.gamma"), {e});
    b.ln1_beta = fetch(store, block_name(i, "ln1.beta"), {e});
    b.attn.wq = fetch(store, block_name(i, "attn.wq"), {e, e});
    b.attn.bq = fetch(store, block_name(i, "attn.bq"), {e});
    b.attn.wk = fetch(store, block_name(i, "attn.wk"), {e, e});
    b.attn.bk = fetch(store, block_name(i, "attn.bk"), {e});
    b.attn.wv = fetch(store, block_name(i, "attn.wv"), {e, e});
    b.attn.bv = fetch(store, block_name(i, "attn.bv"), {e});
    b.attn.wo = fetch(store, block_name(i, "attn.wo"), {e, e});
    b.attn.bo = fetch(store, block_name(i, "attn.bo"), {e});
    b.ln2_gamma = fetch(store, block_name(i, "ln2.gamma"), {e});
    b.ln2_beta = fetch(store, block_name(i, "ln2.beta"), {e});
    b.fc1_w = fetch(store, block_name(i, "mlp.fc1.w"), {e, hidden});
    b.fc1_b = fetch(store, block_name(i, "mlp.fc1.b"), {hidden});
    b.fc2_w = fetch(store, block_name(i, "mlp.fc2.w"), {hidden, e});
    b.fc2_b = fetch(store, block_name(i, "mlp.fc2.b"), {e});
    p.blocks.push_back(std::move(b));
  }
  p.lnf_gamma = fetch(store, "enc.lnf.gamma", {e});
  p.lnf_beta = fetch(store, "enc.lnf.beta", {e});
  p.latent_w = fetch(store, "latent.w", {e, cfg.latent_dim});
  p.latent_b = fetch(store, "latent.b", {cfg.latent_dim});
  return p;
}

Tensor patchify(const Tensor& image, const EncoderConfig& cfg,
                const Tensor& patch_w, const Tensor& patch_b) {
  cfg.validate();
  std::vector<std::size_t> expected = {cfg.channels, cfg.image_size,
                                       cfg.image_size};
  if (image.shape() != expected) {
    throw ShapeError("patchify: image shape " + image.shape_str() +
                     ", expected " + shape_to_string(expected));
  }
  std::size_t p = cfg.patch_size;
  std::size_t side = cfg.patches_per_side();
  std::size_t t = cfg.num_patches();
  std::size_t d = cfg.patch_dim();
  std::size_t hw = cfg.image_size;
  // Gather flattened patches: row = patch in raster order, columns ordered
  // channel, then patch row, then patch column.
  std::vector<std::size_t> index(t * d);
  std::vector<double> raw(t * d);
  std::size_t out = 0;
  for (std::size_t py = 0; py < side; ++py) {
    for (std::size_t px = 0; px < side; ++px) {
      for (std::size_t c = 0; c < cfg.channels; ++c) {
        for (std::size_t dy = 0; dy < p; ++dy) {
          for (std::size_t dx = 0; dx < p; ++dx) {
            std::size_t src = (c * hw + py * p + dy) * hw + px * p + dx;
            index[out] = src;
            raw[out] = image.at(src);
            ++out;
          }
        }
      }
    }
  }
  Tensor patches = make_tracked(
      {t, d}, std::move(raw), {image},
      [image, index = std::move(index)](const detail::TensorNode& o) mutable {
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          image.grad()[index[i]] += o.grad[i];
        }
      });
  return linear(patches, patch_w, patch_b);
}

Tensor build_tokens(const Tensor& patches, const Tensor& cls,
                    const Tensor& pos) {
  if (cls.ndim() != 2 || cls.rows() != 1) {
    throw ConfigError("build_tokens: cls must be [1, E], got " +
                      cls.shape_str());
  }
  std::size_t e = cls.cols();
  if (patches.ndim() != 2 || patches.cols() != e) {
    throw ConfigError("build_tokens: patches " + patches.shape_str() +
                      " do not match cls width " + std::to_string(e));
  }
  if (pos.ndim() != 2 || pos.rows() != patches.rows() + 1 || pos.cols() != e) {
    throw ConfigError("build_tokens: pos " + pos.shape_str() + ", expected [" +
                      std::to_string(patches.rows() + 1) + "x" +
                      std::to_string(e) + "]");
  }
  std::vector<Tensor> parts = {cls, patches};
  return add(concat_rows(parts), pos);
}

Tensor encoder_block(const Tensor& tokens, const BlockParams& p,
                     std::size_t heads, double ln_eps) {
  Tensor x_att = add(
      tokens, msa(layer_norm(tokens, p.ln1_gamma, p.ln1_beta, ln_eps), p.attn,
                  heads));
  Tensor h = layer_norm(x_att, p.ln2_gamma, p.ln2_beta, ln_eps);
  h = gelu(linear(h, p.fc1_w, p.fc1_b));
  h = linear(h, p.fc2_w, p.fc2_b);
  return add(x_att, h);
}

LatentBatch extract_latent(std::span<const Tensor> images,
                           const EncoderConfig& cfg, const VitParams& params) {
  if (images.empty()) throw ShapeError("extract_latent: empty batch");
  std::vector<Tensor> cls_rows;
  cls_rows.reserve(images.size());
  for (const Tensor& image : images) {
    Tensor tokens = build_tokens(patchify(image, cfg, params.patch_w,
                                          params.patch_b),
                                 params.cls, params.pos);
    for (const BlockParams& block : params.blocks) {
      tokens = encoder_block(tokens, block, cfg.heads, cfg.ln_eps);
    }
    tokens = layer_norm(tokens, params.lnf_gamma, params.lnf_beta, cfg.ln_eps);
    cls_rows.push_back(slice_rows(tokens, 0, 1));
  }
  Tensor cls_batch =
      cls_rows.size() == 1 ? cls_rows[0] : concat_rows(cls_rows);
  Tensor projected = linear(cls_batch, params.latent_w, params.latent_b);
  LatentBatch out;
  out.features = instance_norm(projected, cfg.in_eps);
  out.normalized = true;
  return out;
}

void freeze_backbone(ParamStore& store) {
  for (const std::string& name : store.names()) {
    if (name.rfind("enc.", 0) == 0) store.set_trainable(name, false);
  }
}

}  // namespace ocvit
