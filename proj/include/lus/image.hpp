#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lus {

/// 8-bit raster, row-major, channels interleaved (1 = gray, 3 = RGB).
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  RawImage() = default;
  /// Zero-filled image; throws Error(ImageUnreadable) on invalid geometry.
  RawImage(int width, int height, int channels);

  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  /// Throws Error(ImageUnreadable) if the invariants do not hold.
  void validate() const;

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

/// Decodes an 8-bit grayscale or RGB PNG (alpha is composited away).
RawImage load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const RawImage& image);

}  // namespace lus
