#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ocvit/dataio.hpp"
#include "ocvit/errors.hpp"

using namespace ocvit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "ocvit_dataio_test";
  fs::create_directories(dir);
  return dir;
}

void push_u32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

fs::path write_bytes(const std::string& name,
                     const std::vector<unsigned char>& bytes) {
  fs::path p = temp_dir() / name;
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!bytes.empty()) {
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  return p;
}

std::vector<unsigned char> idx_image_bytes(std::uint32_t n, std::uint32_t rows,
                                           std::uint32_t cols) {
  std::vector<unsigned char> bytes;
  push_u32(bytes, 0x00000803);
  push_u32(bytes, n);
  push_u32(bytes, rows);
  push_u32(bytes, cols);
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) {
    bytes.push_back(static_cast<unsigned char>(i * 20 % 256));
  }
  return bytes;
}

std::vector<unsigned char> idx_label_bytes(
    const std::vector<unsigned char>& labels) {
  std::vector<unsigned char> bytes;
  push_u32(bytes, 0x00000801);
  push_u32(bytes, static_cast<std::uint32_t>(labels.size()));
  bytes.insert(bytes.end(), labels.begin(), labels.end());
  return bytes;
}

}  // namespace

TEST_CASE("idx images decode to [1, rows, cols] in [0, 1]") {
  fs::path p = write_bytes("imgs.idx", idx_image_bytes(2, 2, 3));
  auto images = read_idx_images(p);
  REQUIRE(images.size() == 2);
  CHECK(images[0].shape() == std::vector<std::size_t>{1, 2, 3});
  CHECK(images[0].at(0) == 0.0);
  CHECK(images[0].at(1) == 20.0 / 255.0);
  CHECK(images[0].at(5) == 100.0 / 255.0);
  CHECK(images[1].at(0) == 120.0 / 255.0);
}

TEST_CASE("idx image validation") {
  auto bytes = idx_image_bytes(2, 2, 3);

  auto bad_magic = bytes;
  bad_magic[3] = 0x01;
  CHECK_THROWS_AS(read_idx_images(write_bytes("bad_magic.idx", bad_magic)),
                  IoError);

  std::vector<unsigned char> stub(bytes.begin(), bytes.begin() + 10);
  CHECK_THROWS_AS(read_idx_images(write_bytes("stub.idx", stub)), IoError);

  auto short_payload = bytes;
  short_payload.pop_back();
  CHECK_THROWS_AS(read_idx_images(write_bytes("short.idx", short_payload)),
                  IoError);

  auto long_payload = bytes;
  long_payload.push_back(0);
  CHECK_THROWS_AS(read_idx_images(write_bytes("long.idx", long_payload)),
                  IoError);

  CHECK_THROWS_AS(read_idx_images(temp_dir() / "nope.idx"), IoError);
}

TEST_CASE("idx labels decode and validate") {
  fs::path p = write_bytes("labels.idx", idx_label_bytes({7, 0, 255}));
  CHECK(read_idx_labels(p) == std::vector<int>{7, 0, 255});

  auto wrong_magic = idx_label_bytes({1});
  wrong_magic[3] = 0x03;
  CHECK_THROWS_AS(read_idx_labels(write_bytes("imgs_as_labels.idx", wrong_magic)),
                  IoError);

  auto short_payload = idx_label_bytes({1, 2});
  short_payload.pop_back();
  CHECK_THROWS_AS(read_idx_labels(write_bytes("short_labels.idx", short_payload)),
                  IoError);
}

TEST_CASE("paired idx ingestion requires matching counts") {
  fs::path imgs = write_bytes("pair_imgs.idx", idx_image_bytes(2, 2, 2));
  fs::path good = write_bytes("pair_labels.idx", idx_label_bytes({3, 1}));
  fs::path bad = write_bytes("pair_labels3.idx", idx_label_bytes({3, 1, 0}));

  LabeledImages pair = read_idx(imgs, good);
  CHECK(pair.images.size() == 2);
  CHECK(pair.labels == std::vector<int>{3, 1});
  CHECK_THROWS_AS(read_idx(imgs, bad), IoError);
}

TEST_CASE("cifar records decode labels and channel-planar pixels") {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  std::vector<unsigned char> bytes;
  for (unsigned char label : {4, 9}) {
    bytes.push_back(label);
    for (std::size_t j = 0; j < kPixels; ++j) {
      bytes.push_back(static_cast<unsigned char>((label + j) % 256));
    }
  }
  fs::path p = write_bytes("batch.bin", bytes);
  LabeledImages out = read_cifar_bin(p, 1);
  REQUIRE(out.images.size() == 2);
  CHECK(out.labels == std::vector<int>{4, 9});
  CHECK(out.images[0].shape() == std::vector<std::size_t>{3, 32, 32});
  CHECK(out.images[0].at(0) == 4.0 / 255.0);
  CHECK(out.images[0].at(1030) == ((4 + 1030) % 256) / 255.0);
  CHECK(out.images[1].at(0) == 9.0 / 255.0);
}

TEST_CASE("two-byte cifar labels keep the fine label") {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  std::vector<unsigned char> bytes = {13, 58};
  for (std::size_t j = 0; j < kPixels; ++j) bytes.push_back(0);
  fs::path p = write_bytes("batch100.bin", bytes);
  LabeledImages out = read_cifar_bin(p, 2);
  REQUIRE(out.labels.size() == 1);
  CHECK(out.labels[0] == 58);
}

TEST_CASE("cifar validation") {
  CHECK_THROWS_AS(read_cifar_bin(temp_dir() / "batch.bin", 3), ConfigError);
  fs::path empty = write_bytes("empty.bin", {});
  CHECK_THROWS_AS(read_cifar_bin(empty, 1), IoError);
  fs::path ragged = write_bytes("ragged.bin", std::vector<unsigned char>(100));
  CHECK_THROWS_AS(read_cifar_bin(ragged, 1), IoError);
}

TEST_CASE("synthetic corpus has the requested counts and labels") {
  SyntheticSpec spec;
  spec.train_count = 6;
  spec.test_inliers = 3;
  spec.test_outliers = 2;
  Dataset data = gen_synthetic(spec);
  CHECK(data.train_images.size() == 6);
  CHECK(data.train_labels == std::vector<int>(6, 0));
  CHECK(data.test_images.size() == 5);
  CHECK(data.test_labels == std::vector<int>{0, 0, 0, 1, 1});
  for (double v : data.test_images[4].data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("synthetic generation is deterministic in the seed") {
  SyntheticSpec spec;
  spec.train_count = 2;
  spec.test_inliers = 1;
  spec.test_outliers = 1;
  Dataset a = gen_synthetic(spec);
  Dataset b = gen_synthetic(spec);
  for (std::size_t i = 0; i < a.train_images.size(); ++i) {
    auto va = a.train_images[i].data();
    auto vb = b.train_images[i].data();
    CHECK(std::vector<double>(va.begin(), va.end()) ==
          std::vector<double>(vb.begin(), vb.end()));
  }
  spec.seed = 2;
  Dataset c = gen_synthetic(spec);
  auto va = a.train_images[0].data();
  auto vc = c.train_images[0].data();
  CHECK(std::vector<double>(va.begin(), va.end()) !=
        std::vector<double>(vc.begin(), vc.end()));
}

TEST_CASE("noise-free synthetic images are exact two-level squares") {
  SyntheticSpec spec;
  spec.image_size = 8;
  spec.square_size = 3;
  spec.inlier_x = 1;
  spec.inlier_y = 2;
  spec.outlier_x = 4;
  spec.outlier_y = 4;
  spec.pixel_noise = 0.0;
  spec.train_count = 1;
  spec.test_inliers = 1;
  spec.test_outliers = 1;
  Dataset data = gen_synthetic(spec);

  auto px = [&](const Tensor& img, std::size_t i, std::size_t j) {
    return img.data()[i * spec.image_size + j];
  };
  const Tensor& inlier = data.train_images[0];
  CHECK(px(inlier, 2, 1) == spec.foreground);
  CHECK(px(inlier, 4, 3) == spec.foreground);
  CHECK(px(inlier, 1, 1) == spec.background);
  CHECK(px(inlier, 2, 4) == spec.background);
  const Tensor& outlier = data.test_images[1];
  CHECK(px(outlier, 4, 4) == spec.foreground);
  CHECK(px(outlier, 2, 1) == spec.background);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec spec;
  spec.square_size = 40;
  CHECK_THROWS_AS(gen_synthetic(spec), ConfigError);

  spec = SyntheticSpec{};
  spec.outlier_x = spec.inlier_x;
  spec.outlier_y = spec.inlier_y;
  CHECK_THROWS_AS(gen_synthetic(spec), ConfigError);

  spec = SyntheticSpec{};
  spec.foreground = 1.5;
  CHECK_THROWS_AS(gen_synthetic(spec), ConfigError);

  spec = SyntheticSpec{};
  spec.train_count = 0;
  CHECK_THROWS_AS(gen_synthetic(spec), ConfigError);
}

TEST_CASE("resize keeps matching sizes bit-identical") {
  Tensor img({1, 3, 3}, {0, 1, 2, 3, 4, 5, 6, 7, 8});
  Tensor same = resize_nearest(img, 3);
  CHECK(same.data().data() == img.data().data());
}

TEST_CASE("resize picks the floor source pixel") {
  Tensor img({1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) img.at(i) = static_cast<double>(i);

  Tensor down = resize_nearest(img, 2);
  CHECK(down.shape() == std::vector<std::size_t>{1, 2, 2});
  CHECK(down.at(0) == 0.0);   // source (0, 0)
  CHECK(down.at(1) == 2.0);   // source (0, 2)
  CHECK(down.at(2) == 8.0);   // source (2, 0)
  CHECK(down.at(3) == 10.0);  // source (2, 2)

  Tensor up = resize_nearest(down, 4);
  CHECK(up.at(0) == 0.0);
  CHECK(up.at(1) == 0.0);  // source (0, 0) again: 1*2/4 floors to 0
  CHECK(up.at(2) == 2.0);
  CHECK(up.at(15) == 10.0);

  Tensor two({2, 1, 1}, {3.0, 7.0});
  Tensor grown = resize_nearest(two, 2);
  CHECK(grown.shape() == std::vector<std::size_t>{2, 2, 2});
  CHECK(grown.at(0) == 3.0);
  CHECK(grown.at(4) == 7.0);

  CHECK_THROWS_AS(resize_nearest(Tensor({2, 2}), 2), ShapeError);
  CHECK_THROWS_AS(resize_nearest(img, 0), ConfigError);
}

TEST_CASE("adapt_channels replicates a single channel") {
  Tensor img({1, 2, 2}, {1, 2, 3, 4});
  Tensor rgb = adapt_channels(img, 3);
  CHECK(rgb.shape() == std::vector<std::size_t>{3, 2, 2});
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(rgb.at(ch * 4 + i) == img.at(i));
    }
  }

  Tensor same = adapt_channels(img, 1);
  CHECK(same.data().data() == img.data().data());

  Tensor color({3, 2, 2});
  CHECK_THROWS_AS(adapt_channels(color, 1), ConfigError);
  CHECK_THROWS_AS(adapt_channels(Tensor({4}), 3), ShapeError);
}
