#include "ocvit/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ocvit/errors.hpp"

namespace ocvit {

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store,
                     const std::filesystem::path& path) {
  nlohmann::json header = nlohmann::json::object();
  std::string payload;
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : store.entries()) {
    std::uint64_t nbytes = 4ull * tensor.size();
    header[name] = {{"dtype", "f32"},
                    {"shape", tensor.shape()},
                    {"offset", offset},
                    {"nbytes", nbytes}};
    for (double v : tensor.data()) {
      float f = static_cast<float>(v);
      put_u32_le(payload, std::bit_cast<std::uint32_t>(f));
    }
    offset += nbytes;
  }
  std::string head_text = header.dump();
  std::string file;
  std::uint64_t len = head_text.size();
  for (int i = 0; i < 8; ++i) {
    file.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
  }
  file += head_text;
  file += payload;

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("checkpoint: cannot open '" + path.string() +
                  "' for writing");
  }
  out.write(file.data(), static_cast<std::streamsize>(file.size()));
  if (!out) {
    throw IoError("checkpoint: write failed for '" + path.string() + "'");
  }
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("checkpoint: cannot open '" + path.string() + "'");
  }
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8) {
    throw IoError("checkpoint: '" + path.string() +
                  "' truncated before the header length");
  }
  std::uint64_t len = get_u64_le(data);
  if (8 + len > bytes.size()) {
    throw IoError("checkpoint: '" + path.string() +
                  "' truncated inside the header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: malformed header in '" + path.string() +
                  "': " + e.what());
  }
  if (!header.is_object()) {
    throw IoError("checkpoint: header of '" + path.string() +
                  "' is not an object");
  }
  const unsigned char* payload = data + 8 + len;
  std::uint64_t payload_size = bytes.size() - 8 - len;

  ParamStore store;
  for (const auto& [name, meta] : header.items()) {
    if (!meta.is_object() || meta.value("dtype", "") != "f32" ||
        !meta.contains("shape") || !meta["shape"].is_array() ||
        !meta.contains("offset") || !meta["offset"].is_number_unsigned() ||
        !meta.contains("nbytes") || !meta["nbytes"].is_number_unsigned()) {
      throw IoError("checkpoint: bad entry for tensor '" + name + "'");
    }
    std::vector<std::size_t> shape;
    for (const auto& d : meta["shape"]) {
      if (!d.is_number_unsigned()) {
        throw IoError("checkpoint: bad shape for tensor '" + name + "'");
      }
      shape.push_back(d.get<std::size_t>());
    }
    std::uint64_t off = meta["offset"].get<std::uint64_t>();
    std::uint64_t nbytes = meta["nbytes"].get<std::uint64_t>();
    std::size_t count = shape_product(shape);
    if (nbytes != 4ull * count) {
      throw IoError("checkpoint: tensor '" + name + "' declares " +
                    std::to_string(nbytes) + " bytes for shape " +
                    shape_to_string(shape));
    }
    if (off + nbytes > payload_size) {
      throw IoError("checkpoint: tensor '" + name +
                    "' extends past the end of the file");
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u = get_u32_le(payload + off + 4 * i);
      values[i] = static_cast<double>(std::bit_cast<float>(u));
    }
    store.add(name, Tensor(std::move(shape), std::move(values)));
  }
  return store;
}

std::map<std::string, std::vector<std::size_t>> expected_param_shapes(
    const EncoderConfig& cfg, std::size_t head_depth) {
  cfg.validate();
  if (head_depth < 1) {
    throw ConfigError("expected_param_shapes: head depth must be >= 1");
  }
  std::size_t e = cfg.embed_dim;
  std::size_t hidden = cfg.mlp_ratio * e;
  std::size_t d = cfg.latent_dim;
  std::map<std::string, std::vector<std::size_t>> out;
  out["enc.patch.w"] = {cfg.patch_dim(), e};
  out["enc.patch.b"] = {e};
  out["enc.cls"] = {1, e};
  out["enc.pos"] = {cfg.num_tokens(), e};
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    std::string base = "enc.block" + std::to_string(i) + ".";
    out[base + "ln1.gamma"] = {e};
    out[base + "ln1.beta"] = {e};
    out[base + "attn.wq"] = {e, e};
    out[base + "attn.bq"] = {e};
    out[base + "attn.wk"] = {e, e};
    out[base + "attn.bk"] = {e};
    out[base + "attn.wv"] = {e, e};
    out[base + "attn.bv"] = {e};
    out[base + "attn.wo"] = {e, e};
    out[base + "attn.bo"] = {e};
    out[base + "ln2.gamma"] = {e};
    out[base + "ln2.beta"] = {e};
    out[base + "mlp.fc1.w"] = {e, hidden};
    out[base + "mlp.fc1.b"] = {hidden};
    out[base + "mlp.fc2.w"] = {hidden, e};
    out[base + "mlp.fc2.b"] = {e};
  }
  out["enc.lnf.gamma"] = {e};
  out["enc.lnf.beta"] = {e};
  out["latent.w"] = {e, d};
  out["latent.b"] = {d};
  for (std::size_t i = 0; i < head_depth; ++i) {
    std::string base = "head.fc" + std::to_string(i) + ".";
    std::size_t out_dim = i + 1 == head_depth ? 2 : d;
    out[base + "w"] = {d, out_dim};
    out[base + "b"] = {out_dim};
  }
  return out;
}

void validate_params(
    const ParamStore& store,
    const std::map<std::string, std::vector<std::size_t>>& expected) {
  for (const auto& [name, shape] : expected) {
    if (!store.contains(name)) {
      throw IoError("checkpoint: missing tensor '" + name + "'");
    }
    if (store.get(name).shape() != shape) {
      throw IoError("checkpoint: tensor '" + name + "' has shape " +
                    store.get(name).shape_str() + ", expected " +
                    shape_to_string(shape));
    }
  }
  for (const std::string& name : store.names()) {
    if (!expected.count(name)) {
      throw IoError("checkpoint: unexpected tensor '" + name + "'");
    }
  }
}

}  // namespace ocvit
