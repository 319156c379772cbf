#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mvdiff/error.hpp"

namespace mvdiff {

// Minimal 8-bit RGB PNG codec (truecolor, non-interlaced). Writing always
// emits filter type 0 rows with a fixed zlib level, so output bytes are a
// pure function of the pixels.

namespace png_detail {

inline void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

inline uint32_t get_u32_be(const uint8_t* p) {
  return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 |
         uint32_t(p[3]);
}

inline void write_chunk(std::vector<uint8_t>& out, const char type[4],
                        const std::vector<uint8_t>& data) {
  put_u32_be(out, uint32_t(data.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uint32_t crc = uint32_t(
      ::crc32(0, out.data() + start, uInt(out.size() - start)));
  put_u32_be(out, crc);
}

inline uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return uint8_t(a);
  if (pb <= pc) return uint8_t(b);
  return uint8_t(c);
}

}  // namespace png_detail

// rgb: H*W*3 bytes, row-major.
inline void write_png_rgb8(const std::filesystem::path& path, int width,
                           int height, const std::vector<uint8_t>& rgb) {
  require(int64_t(rgb.size()) == int64_t(width) * height * 3,
          "png: pixel buffer size mismatch");
  std::vector<uint8_t> raw;
  raw.reserve(size_t(height) * (size_t(width) * 3 + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), rgb.begin() + size_t(y) * width * 3,
               rgb.begin() + size_t(y + 1) * width * 3);
  }
  uLongf comp_len = ::compressBound(uLong(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  require(::compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()),
                      6) == Z_OK,
          "png: deflate failed");
  comp.resize(comp_len);

  std::vector<uint8_t> out = {137, 'P', 'N', 'G', 13, 10, 26, 10};
  std::vector<uint8_t> ihdr;
  png_detail::put_u32_be(ihdr, uint32_t(width));
  png_detail::put_u32_be(ihdr, uint32_t(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  png_detail::write_chunk(out, "IHDR", ihdr);
  png_detail::write_chunk(out, "IDAT", comp);
  png_detail::write_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  require(f.good(), "png: cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()),
          std::streamsize(out.size()));
  require(f.good(), "png: write failed for " + path.string());
}

struct PngImage {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // H*W*3
};

inline PngImage read_png_rgb8(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "png: cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  static const uint8_t sig[8] = {137, 'P', 'N', 'G', 13, 10, 26, 10};
  require(bytes.size() > 8 && std::memcmp(bytes.data(), sig, 8) == 0,
          "png: bad signature in " + path.string());

  PngImage img;
  int bit_depth = 0, color_type = 0, interlace = 0;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 12 <= bytes.size()) {
    const uint32_t len = png_detail::get_u32_be(&bytes[pos]);
    require(pos + 12 + len <= bytes.size(), "png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const uint8_t* data = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      require(len == 13, "png: bad IHDR");
      img.width = int(png_detail::get_u32_be(data));
      img.height = int(png_detail::get_u32_be(data + 4));
      bit_depth = data[8];
      color_type = data[9];
      interlace = data[12];
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  require(img.width > 0 && img.height > 0, "png: missing IHDR");
  require(bit_depth == 8 && (color_type == 2 || color_type == 6),
          "png: only 8-bit RGB/RGBA supported");
  require(interlace == 0, "png: interlacing not supported");

  const int channels = color_type == 2 ? 3 : 4;
  const size_t stride = size_t(img.width) * size_t(channels);
  std::vector<uint8_t> raw(size_t(img.height) * (stride + 1));
  uLongf raw_len = uLongf(raw.size());
  require(::uncompress(raw.data(), &raw_len, idat.data(),
                       uLong(idat.size())) == Z_OK &&
              raw_len == raw.size(),
          "png: inflate failed");

  // undo per-row filters
  std::vector<uint8_t> prev(stride, 0);
  std::vector<uint8_t> cur(stride);
  img.rgb.resize(size_t(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    const uint8_t filter = raw[size_t(y) * (stride + 1)];
    const uint8_t* src = &raw[size_t(y) * (stride + 1) + 1];
    for (size_t x = 0; x < stride; ++x) {
      const int a = x >= size_t(channels) ? cur[x - size_t(channels)] : 0;
      const int b = prev[x];
      const int c = x >= size_t(channels) ? prev[x - size_t(channels)] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += png_detail::paeth(a, b, c); break;
        default: throw Error("png: unknown filter type");
      }
      cur[x] = uint8_t(v);
    }
    for (int x = 0; x < img.width; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.rgb[(size_t(y) * img.width + size_t(x)) * 3 + size_t(ch)] =
            cur[size_t(x) * size_t(channels) + size_t(ch)];
    std::swap(prev, cur);
  }
  return img;
}

}  // namespace mvdiff
