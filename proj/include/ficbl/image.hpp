#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ficbl/error.hpp"

namespace ficbl {

/// Grayscale image, row-major, intensities in [0, 1].
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

inline std::uint8_t to_byte(double intensity) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(intensity, 0.0, 1.0) * 255.0));
}

namespace detail {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Reads a whole file, inflating it if gzip-compressed.
inline std::vector<std::uint8_t> read_maybe_gzip(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes;
  std::array<std::uint8_t, 1 << 16> buf{};
  for (;;) {
    const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      gzclose(f);
      throw IoError("read error in '" + path + "'");
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), buf.begin(), buf.begin() + n);
  }
  gzclose(f);
  return bytes;
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t offset,
                               const std::string& path) {
  if (offset + 4 > b.size()) throw IoError("truncated IDX header in '" + path + "'");
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

}  // namespace detail

/// Reads an IDX3 u8 image file (plain or gzip).
inline std::vector<GrayImage> load_idx_images(const std::string& path) {
  const auto b = detail::read_maybe_gzip(path);
  const std::uint32_t magic = detail::read_be32(b, 0, path);
  if (magic != detail::kIdxImagesMagic) throw IoError("bad IDX image magic in '" + path + "'");
  const std::size_t n = detail::read_be32(b, 4, path);
  const std::size_t rows = detail::read_be32(b, 8, path);
  const std::size_t cols = detail::read_be32(b, 12, path);
  const std::size_t pixels = rows * cols;
  if (b.size() < 16 + n * pixels) throw IoError("truncated IDX image data in '" + path + "'");
  std::vector<GrayImage> images;
  images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    GrayImage img(cols, rows);
    const std::uint8_t* src = b.data() + 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) img.pixels[p] = src[p] / 255.0;
    images.push_back(std::move(img));
  }
  return images;
}

/// Reads an IDX1 u8 label file (plain or gzip).
inline std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
  const auto b = detail::read_maybe_gzip(path);
  const std::uint32_t magic = detail::read_be32(b, 0, path);
  if (magic != detail::kIdxLabelsMagic) throw IoError("bad IDX label magic in '" + path + "'");
  const std::size_t n = detail::read_be32(b, 4, path);
  if (b.size() < 8 + n) throw IoError("truncated IDX label data in '" + path + "'");
  return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(n)};
}

/// Images paired with their digit labels; counts must agree.
inline std::vector<std::pair<GrayImage, int>> load_idx(const std::string& images_path,
                                                       const std::string& labels_path) {
  auto images = load_idx_images(images_path);
  const auto labels = load_idx_labels(labels_path);
  if (images.size() != labels.size()) {
    throw IoError("IDX count mismatch: " + std::to_string(images.size()) + " images, " +
                  std::to_string(labels.size()) + " labels");
  }
  std::vector<std::pair<GrayImage, int>> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.emplace_back(std::move(images[i]), labels[i]);
  }
  return out;
}

/// Writes images as uncompressed IDX3 u8. All images must share one size.
inline void write_idx_images(const std::string& path, const std::vector<GrayImage>& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  const std::size_t w = images.empty() ? 0 : images.front().width;
  const std::size_t h = images.empty() ? 0 : images.front().height;
  detail::write_be32(out, detail::kIdxImagesMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(images.size()));
  detail::write_be32(out, static_cast<std::uint32_t>(h));
  detail::write_be32(out, static_cast<std::uint32_t>(w));
  std::vector<char> row(w * h);
  for (const auto& img : images) {
    if (img.width != w || img.height != h) throw DomainError("IDX images must share one size");
    for (std::size_t p = 0; p < row.size(); ++p) row[p] = static_cast<char>(to_byte(img.pixels[p]));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  detail::write_be32(out, detail::kIdxLabelsMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace ficbl
