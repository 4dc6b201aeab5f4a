// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hecnn/model.hpp"

namespace hecnn::data {

/// n images of one shape, back to back in HWC order, pixels in [0, 1].
struct Dataset {
  model::Shape shape;
  std::size_t count = 0;
  std::vector<double> images;
  std::vector<int> labels;

  std::span<const double> image(std::size_t i) const { return {images.data() + i * shape.size(), shape.size()}; }
  /// First n images (or all when n exceeds the count).
  Dataset head(std::size_t n) const;
};

/// Parses in-memory IDX buffers (0x00000803 images, 0x00000801 labels).
Dataset parse_mnist_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);
Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Parses concatenated CIFAR-10 records: label byte then R, G and B planes of 32x32.
Dataset parse_cifar10(std::span<const std::uint8_t> bytes);
Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& batch_paths);

/// Raw bytes of the dataset in its source format (pixels * 255, rounded).
std::vector<std::uint8_t> mnist_images_to_idx(const Dataset& d);
std::vector<std::uint8_t> mnist_labels_to_idx(const Dataset& d);
std::vector<std::uint8_t> cifar10_to_bin(const Dataset& d);

/// batch.bin: "HECNBAT1", u32 n, u32 h*w*c, then n*h*w*c float32, all little-endian.
/// The shape is not stored; readers supply it.
std::vector<std::uint8_t> encode_batch(std::span<const double> images, std::size_t count, std::size_t per_image);
std::vector<double> decode_batch(std::span<const std::uint8_t> bytes, std::size_t& count, std::size_t& per_image);
void write_batch(const std::filesystem::path& path, std::span<const double> images, std::size_t count,
                 std::size_t per_image);
std::vector<double> read_batch(const std::filesystem::path& path, std::size_t& count, std::size_t& per_image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace hecnn::data
