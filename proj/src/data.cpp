// SPDX-License-Identifier: Apache-2.0
#include "hecnn/data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hecnn/error.hpp"

namespace hecnn::data {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr int kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;
constexpr char kBatchMagic[8] = {'H', 'E', 'C', 'N', 'B', 'A', 'T', '1'};

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  if (at + 4 > b.size()) throw Error(ErrorCode::bad_format, "truncated header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t read_le32(std::span<const std::uint8_t> b, std::size_t at) {
  return std::uint32_t{b[at]} | (std::uint32_t{b[at + 1]} << 8) | (std::uint32_t{b[at + 2]} << 16) |
         (std::uint32_t{b[at + 3]} << 24);
}

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint8_t to_byte(double pixel) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(pixel, 0.0, 1.0) * 255.0));
}

}  // namespace

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, count);
  Dataset d{shape, n, {}, {}};
  d.images.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(n * shape.size()));
  d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  return d;
}

Dataset parse_mnist_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  if (read_be32(images, 0) != kIdxImages) throw Error(ErrorCode::bad_format, "bad IDX image magic");
  if (read_be32(labels, 0) != kIdxLabels) throw Error(ErrorCode::bad_format, "bad IDX label magic");
  const std::size_t n = read_be32(images, 4);
  const int rows = static_cast<int>(read_be32(images, 8));
  const int cols = static_cast<int>(read_be32(images, 12));
  const std::size_t n_labels = read_be32(labels, 4);
  if (n != n_labels) {
    throw Error(ErrorCode::bad_format,
                "image count " + std::to_string(n) + " does not match label count " + std::to_string(n_labels));
  }
  Dataset d{{rows, cols, 1}, n, {}, {}};
  const std::size_t pixels = n * d.shape.size();
  if (images.size() != 16 + pixels) throw Error(ErrorCode::bad_format, "IDX image payload has the wrong length");
  if (labels.size() != 8 + n) throw Error(ErrorCode::bad_format, "IDX label payload has the wrong length");
  d.images.resize(pixels);
  for (std::size_t i = 0; i < pixels; ++i) d.images[i] = images[16 + i] / 255.0;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = labels[8 + i];
    if (d.labels[i] > 9) throw Error(ErrorCode::bad_format, "label out of range");
  }
  return d;
}

Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  return parse_mnist_idx(read_file(images_path), read_file(labels_path));
}

Dataset parse_cifar10(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    throw Error(ErrorCode::bad_format, "CIFAR-10 data length " + std::to_string(bytes.size()) +
                                           " is not a positive multiple of " + std::to_string(kCifarRecord));
  }
  const std::size_t n = bytes.size() / kCifarRecord;
  Dataset d{{kCifarSide, kCifarSide, 3}, n, {}, {}};
  d.images.resize(n * d.shape.size());
  d.labels.resize(n);
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < n; ++r) {
    const auto rec = bytes.subspan(r * kCifarRecord, kCifarRecord);
    d.labels[r] = rec[0];
    if (rec[0] > 9) throw Error(ErrorCode::bad_format, "label out of range");
    double* img = d.images.data() + r * d.shape.size();
    for (int c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < plane; ++p) img[p * 3 + static_cast<std::size_t>(c)] = rec[1 + c * plane + p] / 255.0;
    }
  }
  return d;
}

Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& batch_paths) {
  if (batch_paths.empty()) throw Error(ErrorCode::invalid_argument, "no CIFAR-10 batch files given");
  std::vector<std::uint8_t> all;
  for (const auto& p : batch_paths) {
    const auto bytes = read_file(p);
    if (bytes.size() % kCifarRecord != 0) throw Error(ErrorCode::bad_format, p.string() + ": truncated record");
    all.insert(all.end(), bytes.begin(), bytes.end());
  }
  return parse_cifar10(all);
}

std::vector<std::uint8_t> mnist_images_to_idx(const Dataset& d) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + d.images.size());
  put_be32(out, kIdxImages);
  put_be32(out, static_cast<std::uint32_t>(d.count));
  put_be32(out, static_cast<std::uint32_t>(d.shape.h));
  put_be32(out, static_cast<std::uint32_t>(d.shape.w));
  for (double v : d.images) out.push_back(to_byte(v));
  return out;
}

std::vector<std::uint8_t> mnist_labels_to_idx(const Dataset& d) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + d.labels.size());
  put_be32(out, kIdxLabels);
  put_be32(out, static_cast<std::uint32_t>(d.count));
  for (int l : d.labels) out.push_back(static_cast<std::uint8_t>(l));
  return out;
}

std::vector<std::uint8_t> cifar10_to_bin(const Dataset& d) {
  if (d.shape != model::Shape{kCifarSide, kCifarSide, 3}) throw Error(ErrorCode::shape_mismatch, "not CIFAR-shaped");
  std::vector<std::uint8_t> out;
  out.reserve(d.count * kCifarRecord);
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < d.count; ++r) {
    out.push_back(static_cast<std::uint8_t>(d.labels[r]));
    const auto img = d.image(r);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < plane; ++p) out.push_back(to_byte(img[p * 3 + c]));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_batch(std::span<const double> images, std::size_t count, std::size_t per_image) {
  if (images.size() != count * per_image) throw Error(ErrorCode::shape_mismatch, "batch buffer size mismatch");
  std::vector<std::uint8_t> out(std::begin(kBatchMagic), std::end(kBatchMagic));
  out.reserve(16 + images.size() * 4);
  put_le32(out, static_cast<std::uint32_t>(count));
  put_le32(out, static_cast<std::uint32_t>(per_image));
  for (double v : images) put_le32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

std::vector<double> decode_batch(std::span<const std::uint8_t> bytes, std::size_t& count, std::size_t& per_image) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kBatchMagic, 8) != 0) {
    throw Error(ErrorCode::bad_format, "not a batch file");
  }
  count = read_le32(bytes, 8);
  per_image = read_le32(bytes, 12);
  if (bytes.size() != 16 + count * per_image * 4) throw Error(ErrorCode::bad_format, "batch payload has the wrong length");
  std::vector<double> out(count * per_image);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(std::bit_cast<float>(read_le32(bytes, 16 + 4 * i)));
  }
  return out;
}

void write_batch(const std::filesystem::path& path, std::span<const double> images, std::size_t count,
                 std::size_t per_image) {
  write_file(path, encode_batch(images, count, per_image));
}

std::vector<double> read_batch(const std::filesystem::path& path, std::size_t& count, std::size_t& per_image) {
  return decode_batch(read_file(path), count, per_image);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path.string());
}

}  // namespace hecnn::data
