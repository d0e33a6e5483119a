#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ocvit/checkpoint.hpp"
#include "ocvit/encoder.hpp"
#include "ocvit/errors.hpp"
#include "ocvit/heads.hpp"
#include "ocvit/rng.hpp"

using namespace ocvit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "ocvit_ckpt_test";
  fs::create_directories(dir);
  return dir;
}

ParamStore sample_store() {
  ParamStore store;
  Rng rng(41);
  Tensor w({3, 2});
  rng.fill_gaussian(w.data(), 0.0, 1.0);
  Tensor b({2});
  rng.fill_gaussian(b.data(), 0.0, 1.0);
  store.add("layer.w", w);
  store.add("layer.b", b, false);
  quantize_f32(store);
  return store;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  ParamStore store = sample_store();
  fs::path path = temp_dir() / "roundtrip.ckpt";
  save_checkpoint(store, path);
  ParamStore loaded = load_checkpoint(path);

  CHECK(loaded.names() == store.names());
  for (const std::string& name : store.names()) {
    const Tensor& a = store.get(name);
    const Tensor& b = loaded.get(name);
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.data()[i] == b.data()[i]);
    }
  }
}

TEST_CASE("saving twice produces identical bytes") {
  ParamStore store = sample_store();
  fs::path p1 = temp_dir() / "bytes1.ckpt";
  fs::path p2 = temp_dir() / "bytes2.ckpt";
  save_checkpoint(store, p1);
  save_checkpoint(store, p2);
  CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("save creates missing parent directories") {
  fs::path dir = temp_dir() / "nested" / "deeper";
  fs::remove_all(temp_dir() / "nested");
  fs::path path = dir / "model.ckpt";
  save_checkpoint(sample_store(), path);
  CHECK(fs::exists(path));
}

TEST_CASE("loading a missing or truncated file fails cleanly") {
  CHECK_THROWS_AS(load_checkpoint(temp_dir() / "nope.ckpt"), IoError);

  ParamStore store = sample_store();
  fs::path path = temp_dir() / "trunc.ckpt";
  save_checkpoint(store, path);
  std::vector<char> bytes = read_bytes(path);

  std::vector<char> cut_header(bytes.begin(), bytes.begin() + 4);
  write_bytes(path, cut_header);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);

  std::vector<char> cut_payload(bytes.begin(), bytes.end() - 3);
  write_bytes(path, cut_payload);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("loading rejects corrupt headers") {
  ParamStore store = sample_store();
  fs::path path = temp_dir() / "corrupt.ckpt";
  save_checkpoint(store, path);
  std::vector<char> bytes = read_bytes(path);
  // Control bytes are invalid anywhere in JSON, even inside name strings.
  bytes[12] = '\x01';
  bytes[13] = '\x01';
  write_bytes(path, bytes);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("expected shapes cover encoder plus head") {
  EncoderConfig cfg = vit_tiny_test_config();
  auto shapes = expected_param_shapes(cfg, 2);

  CHECK(shapes.at("enc.patch.w") == std::vector<std::size_t>{64, 64});
  CHECK(shapes.at("enc.cls") == std::vector<std::size_t>{1, 64});
  CHECK(shapes.at("enc.pos") == std::vector<std::size_t>{17, 64});
  CHECK(shapes.at("enc.block1.attn.wo") == std::vector<std::size_t>{64, 64});
  CHECK(shapes.at("enc.block0.mlp.fc1.w") ==
        std::vector<std::size_t>{64, 256});
  CHECK(shapes.at("latent.w") == std::vector<std::size_t>{64, 64});
  CHECK(shapes.at("head.fc0.w") == std::vector<std::size_t>{64, 64});
  CHECK(shapes.at("head.fc1.w") == std::vector<std::size_t>{64, 2});
  CHECK(shapes.at("head.fc1.b") == std::vector<std::size_t>{2});
  CHECK(!shapes.count("head.fc2.w"));
}

TEST_CASE("validate_params flags missing, extra, and misshapen tensors") {
  std::map<std::string, std::vector<std::size_t>> expected = {
      {"a", {2, 2}}, {"b", {3}}};

  ParamStore ok;
  ok.add("a", Tensor({2, 2}));
  ok.add("b", Tensor({3}));
  validate_params(ok, expected);

  ParamStore missing;
  missing.add("a", Tensor({2, 2}));
  CHECK_THROWS_AS(validate_params(missing, expected), IoError);

  ParamStore extra;
  extra.add("a", Tensor({2, 2}));
  extra.add("b", Tensor({3}));
  extra.add("c", Tensor({1}));
  CHECK_THROWS_AS(validate_params(extra, expected), IoError);

  ParamStore wrong;
  wrong.add("a", Tensor({2, 2}));
  wrong.add("b", Tensor({4}));
  CHECK_THROWS_AS(validate_params(wrong, expected), IoError);
}

TEST_CASE("a trained-shape store round trips through its checkpoint") {
  EncoderConfig cfg;
  cfg.image_size = 4;
  cfg.channels = 1;
  cfg.patch_size = 2;
  cfg.embed_dim = 8;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  cfg.latent_dim = 4;
  ParamStore store;
  Rng rng(55);
  init_encoder_params(cfg, store, rng);
  init_fc_head(cfg.latent_dim, 1, store, rng);

  fs::path path = temp_dir() / "enc.ckpt";
  save_checkpoint(store, path);
  ParamStore loaded = load_checkpoint(path);
  validate_params(loaded, expected_param_shapes(cfg, 1));

  for (const std::string& name : store.names()) {
    const Tensor& a = store.get(name);
    const Tensor& b = loaded.get(name);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.data()[i] == b.data()[i]);
    }
  }
}
