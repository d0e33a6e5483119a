#include "ocvit/dataio.hpp"

#include <algorithm>
#include <fstream>

#include "ocvit/errors.hpp"
#include "ocvit/rng.hpp"

namespace ocvit {

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t get_u32_be(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) |
         static_cast<std::uint32_t>(p[3]);
}

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

}  // namespace

std::vector<Tensor> read_idx_images(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes = read_all(path);
  if (bytes.size() < 16) {
    throw IoError("idx: '" + path.string() + "' truncated at byte " +
                  std::to_string(bytes.size()) + " (header needs 16)");
  }
  std::uint32_t magic = get_u32_be(bytes.data());
  if (magic != kIdxImageMagic) {
    throw IoError("idx: '" + path.string() + "' has magic " +
                  std::to_string(magic) + " at byte 0, expected " +
                  std::to_string(kIdxImageMagic) + " (images)");
  }
  std::size_t n = get_u32_be(bytes.data() + 4);
  std::size_t rows = get_u32_be(bytes.data() + 8);
  std::size_t cols = get_u32_be(bytes.data() + 12);
  std::size_t expected = 16 + n * rows * cols;
  if (bytes.size() != expected) {
    throw IoError("idx: '" + path.string() + "' has " +
                  std::to_string(bytes.size()) + " bytes, header implies " +
                  std::to_string(expected) + " (payload ends at byte " +
                  std::to_string(bytes.size()) + ")");
  }
  std::vector<Tensor> images;
  images.reserve(n);
  const unsigned char* p = bytes.data() + 16;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor img({1, rows, cols});
    auto data = img.data();
    for (std::size_t j = 0; j < rows * cols; ++j) {
      data[j] = static_cast<double>(p[j]) / 255.0;
    }
    p += rows * cols;
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes = read_all(path);
  if (bytes.size() < 8) {
    throw IoError("idx: '" + path.string() + "' truncated at byte " +
                  std::to_string(bytes.size()) + " (header needs 8)");
  }
  std::uint32_t magic = get_u32_be(bytes.data());
  if (magic != kIdxLabelMagic) {
    throw IoError("idx: '" + path.string() + "' has magic " +
                  std::to_string(magic) + " at byte 0, expected " +
                  std::to_string(kIdxLabelMagic) + " (labels)");
  }
  std::size_t n = get_u32_be(bytes.data() + 4);
  if (bytes.size() != 8 + n) {
    throw IoError("idx: '" + path.string() + "' has " +
                  std::to_string(bytes.size()) + " bytes, header implies " +
                  std::to_string(8 + n));
  }
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(bytes[8 + i]);
  }
  return labels;
}

LabeledImages read_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path) {
  LabeledImages out;
  out.images = read_idx_images(images_path);
  out.labels = read_idx_labels(labels_path);
  if (out.images.size() != out.labels.size()) {
    throw IoError("idx: " + std::to_string(out.images.size()) + " images in '" +
                  images_path.string() + "' vs " +
                  std::to_string(out.labels.size()) + " labels in '" +
                  labels_path.string() + "'");
  }
  return out;
}

LabeledImages read_cifar_bin(const std::filesystem::path& path,
                             std::size_t label_bytes) {
  if (label_bytes != 1 && label_bytes != 2) {
    throw ConfigError("cifar: label_bytes must be 1 or 2, got " +
                      std::to_string(label_bytes));
  }
  std::vector<unsigned char> bytes = read_all(path);
  constexpr std::size_t kPixels = 3 * 32 * 32;
  std::size_t record = label_bytes + kPixels;
  if (bytes.empty() || bytes.size() % record != 0) {
    throw IoError("cifar: '" + path.string() + "' has " +
                  std::to_string(bytes.size()) +
                  " bytes, not a positive multiple of the record size " +
                  std::to_string(record));
  }
  std::size_t n = bytes.size() / record;
  LabeledImages out;
  out.images.reserve(n);
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = bytes.data() + i * record;
    out.labels.push_back(static_cast<int>(p[label_bytes - 1]));
    Tensor img({3, 32, 32});
    auto data = img.data();
    for (std::size_t j = 0; j < kPixels; ++j) {
      data[j] = static_cast<double>(p[label_bytes + j]) / 255.0;
    }
    out.images.push_back(std::move(img));
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (image_size < 1 || square_size < 1) {
    throw ConfigError("synthetic: image and square sizes must be >= 1");
  }
  if (inlier_x == outlier_x && inlier_y == outlier_y) {
    throw ConfigError("synthetic: inlier and outlier positions must differ");
  }
  for (auto [x, y] : {std::pair{inlier_x, inlier_y},
                      std::pair{outlier_x, outlier_y}}) {
    if (x + square_size > image_size || y + square_size > image_size) {
      throw ConfigError("synthetic: square at (" + std::to_string(x) + ", " +
                        std::to_string(y) + ") exceeds image size " +
                        std::to_string(image_size));
    }
  }
  if (foreground < 0.0 || foreground > 1.0 || background < 0.0 ||
      background > 1.0) {
    throw ConfigError("synthetic: intensities must lie in [0, 1]");
  }
  if (pixel_noise < 0.0) {
    throw ConfigError("synthetic: pixel noise must be >= 0");
  }
  if (train_count < 1 || test_inliers < 1 || test_outliers < 1) {
    throw ConfigError("synthetic: all sample counts must be >= 1");
  }
}

namespace {

Tensor synthetic_image(const SyntheticSpec& spec, std::size_t x, std::size_t y,
                       Rng& rng) {
  std::size_t s = spec.image_size;
  Tensor img({1, s, s});
  auto data = img.data();
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      bool inside = i >= y && i < y + spec.square_size && j >= x &&
                    j < x + spec.square_size;
      double v = inside ? spec.foreground : spec.background;
      if (spec.pixel_noise > 0.0) v += rng.normal(0.0, spec.pixel_noise);
      data[i * s + j] = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset data;
  for (std::size_t i = 0; i < spec.train_count; ++i) {
    data.train_images.push_back(
        synthetic_image(spec, spec.inlier_x, spec.inlier_y, rng));
    data.train_labels.push_back(0);
  }
  for (std::size_t i = 0; i < spec.test_inliers; ++i) {
    data.test_images.push_back(
        synthetic_image(spec, spec.inlier_x, spec.inlier_y, rng));
    data.test_labels.push_back(0);
  }
  for (std::size_t i = 0; i < spec.test_outliers; ++i) {
    data.test_images.push_back(
        synthetic_image(spec, spec.outlier_x, spec.outlier_y, rng));
    data.test_labels.push_back(1);
  }
  return data;
}

Tensor resize_nearest(const Tensor& image, std::size_t target) {
  if (image.ndim() != 3) {
    throw ShapeError("resize: expected [C, H, W] image, got " +
                     image.shape_str());
  }
  if (target < 1) throw ConfigError("resize: target must be >= 1");
  std::size_t c = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
  if (h == target && w == target) return image;
  Tensor out({c, target, target});
  auto dst = out.data();
  auto src = image.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < target; ++i) {
      std::size_t si = i * h / target;
      for (std::size_t j = 0; j < target; ++j) {
        std::size_t sj = j * w / target;
        dst[(ch * target + i) * target + j] = src[(ch * h + si) * w + sj];
      }
    }
  }
  return out;
}

Tensor adapt_channels(const Tensor& image, std::size_t channels) {
  if (image.ndim() != 3) {
    throw ShapeError("adapt_channels: expected [C, H, W] image, got " +
                     image.shape_str());
  }
  std::size_t c = image.shape()[0];
  if (c == channels) return image;
  if (c != 1) {
    throw ConfigError("adapt_channels: cannot map " + std::to_string(c) +
                      " channels to " + std::to_string(channels));
  }
  std::size_t h = image.shape()[1], w = image.shape()[2];
  Tensor out({channels, h, w});
  auto dst = out.data();
  auto src = image.data();
  for (std::size_t ch = 0; ch < channels; ++ch) {
    std::copy(src.begin(), src.end(), dst.begin() + ch * h * w);
  }
  return out;
}

}  // namespace ocvit
