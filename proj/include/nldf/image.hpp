#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nldf {

/// Row-major RGB image, linear float values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // 3 * width * height

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(3) * w * h, 0.0) {}

  double* at(int x, int y) { return pixels.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const double* at(int x, int y) const {
    return pixels.data() + 3 * (static_cast<size_t>(y) * width + x);
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

/// 8-bit quantization used by every writer: round(255 * clamp(v, 0, 1)).
std::uint8_t quantize8(double v);

/// Binary PPM (P6, 8-bit). This is the byte-exact golden-file format.
std::vector<std::uint8_t> encode_ppm(const Image& image);
void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

/// 8-bit RGB PNG (zlib-compressed), a convenience alias for viewers.
void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace nldf
