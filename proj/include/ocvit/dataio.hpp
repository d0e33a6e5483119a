#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ocvit/evalproto.hpp"
#include "ocvit/tensor.hpp"

namespace ocvit {

/// IDX image file (big-endian magic 0x00000803, dims N,rows,cols, raw
/// bytes). Pixels scaled to [0,1] by /255; tensors are [1, rows, cols].
std::vector<Tensor> read_idx_images(const std::filesystem::path& path);

/// IDX label file (magic 0x00000801, dim N).
std::vector<int> read_idx_labels(const std::filesystem::path& path);

struct LabeledImages {
  std::vector<Tensor> images;
  std::vector<int> labels;
};

/// Paired IDX ingestion; counts must agree.
LabeledImages read_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path);

/// CIFAR binary records: label_bytes (1, or 2 with the fine label last)
/// followed by 3072 channel-planar bytes -> [3,32,32] images in [0,1].
LabeledImages read_cifar_bin(const std::filesystem::path& path,
                             std::size_t label_bytes = 1);

struct SyntheticSpec {
  std::size_t image_size = 32;
  std::size_t square_size = 10;
  std::size_t inlier_x = 4, inlier_y = 4;    // top-left corner
  std::size_t outlier_x = 18, outlier_y = 18;
  double foreground = 0.9;
  double background = 0.2;
  double pixel_noise = 0.05;  // additive Gaussian sigma, clamped to [0,1]
  std::size_t train_count = 500;
  std::size_t test_inliers = 200;
  std::size_t test_outliers = 200;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Deterministic synthetic corpus: train = inliers only; test = inliers then
/// outliers, anomaly label 1 for the displaced square.
Dataset gen_synthetic(const SyntheticSpec& spec);

/// Nearest-neighbor square resize per channel; bit-identical when sizes
/// match. Source pixel for output (i,j) is (floor(i*H/S), floor(j*W/S)).
Tensor resize_nearest(const Tensor& image, std::size_t target);

/// Replicates a single channel to the requested count; errors when the
/// image already has more channels than requested.
Tensor adapt_channels(const Tensor& image, std::size_t channels);

}  // namespace ocvit
