#include "nldf/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "nldf/errors.hpp"

namespace nldf {

std::uint8_t quantize8(double v) {
  if (v < 0.0) v = 0.0;
  if (v > 1.0) v = 1.0;
  return static_cast<std::uint8_t>(std::lround(255.0 * v));
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + image.pixels.size());
  for (double v : image.pixels) bytes.push_back(quantize8(v));
  return bytes;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
    throw DomainError(path.string() + " is not an 8-bit P6 PPM");
  in.get();  // single whitespace after maxval
  Image image(w, h);
  std::vector<std::uint8_t> raw(static_cast<size_t>(3) * w * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size())
    throw DomainError(path.string() + " truncated");
  for (size_t i = 0; i < raw.size(); ++i) image.pixels[i] = raw[i] / 255.0;
  return image;
}

namespace {

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
  put_u32be(out, static_cast<std::uint32_t>(payload.size()));
  const size_t crc_begin = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const auto crc = crc32(0, out.data() + crc_begin, static_cast<uInt>(out.size() - crc_begin));
  put_u32be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png(const Image& image, const std::filesystem::path& path) {
  // Raw scanlines with filter byte 0, then one zlib stream.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<size_t>(image.height) * (1 + 3 * image.width));
  for (int y = 0; y < image.height; ++y) {
    raw.push_back(0);
    for (int x = 0; x < image.width; ++x) {
      const double* px = image.at(x, y);
      raw.push_back(quantize8(px[0]));
      raw.push_back(quantize8(px[1]));
      raw.push_back(quantize8(px[2]));
    }
  }
  uLongf compressed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(compressed_size);
  if (compress2(compressed.data(), &compressed_size, raw.data(), static_cast<uLong>(raw.size()),
                Z_BEST_SPEED) != Z_OK)
    throw DomainError("png compression failed");
  compressed.resize(compressed_size);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(image.width));
  put_u32be(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", compressed);
  put_chunk(out, "IEND", {});

  std::ofstream file(path, std::ios::binary);
  if (!file) throw DomainError("cannot open " + path.string() + " for writing");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

}  // namespace nldf
