#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "roomfill/common.hpp"

// Minimal PNG codec: 8-bit grayscale and RGB, no interlace. Writing always
// uses filter type None and a fixed zlib level, so output bytes are a pure
// function of the pixel data (the dataset reproducibility contract).
namespace roomfill::png {

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void write_chunk(std::vector<std::uint8_t>& out, const char type[4],
                        const std::uint8_t* data, std::size_t len) {
  put_u32(out, std::uint32_t(len));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  if (len) out.insert(out.end(), data, data + len);
  std::uint32_t crc = std::uint32_t(
      ::crc32(0, out.data() + start, uInt(4 + len)));
  put_u32(out, crc);
}

inline int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace detail

// `pixels` is row-major H x W x channels, channels = 1 (gray) or 3 (RGB).
inline std::vector<std::uint8_t> encode(const std::uint8_t* pixels, int width,
                                        int height, int channels) {
  RF_CHECK(channels == 1 || channels == 3, IoError,
           "png: unsupported channel count ", channels);
  RF_CHECK(width > 0 && height > 0, IoError, "png: empty image");

  // Raw scanlines, each prefixed by filter byte 0.
  std::size_t stride = std::size_t(width) * channels;
  std::vector<std::uint8_t> raw((stride + 1) * std::size_t(height));
  for (int y = 0; y < height; ++y) {
    std::uint8_t* row = raw.data() + std::size_t(y) * (stride + 1);
    row[0] = 0;
    std::memcpy(row + 1, pixels + std::size_t(y) * stride, stride);
  }

  uLongf bound = ::compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  int rc = ::compress2(compressed.data(), &bound, raw.data(), uLong(raw.size()), 6);
  RF_CHECK(rc == Z_OK, IoError, "png: zlib compress failed, rc=", rc);
  compressed.resize(bound);

  std::vector<std::uint8_t> out;
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.insert(out.end(), sig, sig + 8);

  std::uint8_t ihdr[13];
  ihdr[0] = std::uint8_t(width >> 24);
  ihdr[1] = std::uint8_t(width >> 16);
  ihdr[2] = std::uint8_t(width >> 8);
  ihdr[3] = std::uint8_t(width);
  ihdr[4] = std::uint8_t(height >> 24);
  ihdr[5] = std::uint8_t(height >> 16);
  ihdr[6] = std::uint8_t(height >> 8);
  ihdr[7] = std::uint8_t(height);
  ihdr[8] = 8;                                    // bit depth
  ihdr[9] = (channels == 1) ? 0 : 2;              // gray / truecolor
  ihdr[10] = 0;                                   // compression
  ihdr[11] = 0;                                   // filter method
  ihdr[12] = 0;                                   // no interlace
  detail::write_chunk(out, "IHDR", ihdr, 13);
  detail::write_chunk(out, "IDAT", compressed.data(), compressed.size());
  detail::write_chunk(out, "IEND", nullptr, 0);
  return out;
}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;  // H x W x channels
};

inline Decoded decode(const std::vector<std::uint8_t>& file) {
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  RF_CHECK(file.size() > 8 && std::memcmp(file.data(), sig, 8) == 0, IoError,
           "png: bad signature");

  Decoded d;
  int bit_depth = 0, color_type = 0, interlace = 0;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 8 <= file.size()) {
    std::uint32_t len = detail::get_u32(file.data() + pos);
    RF_CHECK(pos + 12 + len <= file.size(), IoError, "png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
    const std::uint8_t* data = file.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      RF_CHECK(len == 13, IoError, "png: bad IHDR");
      d.width = int(detail::get_u32(data));
      d.height = int(detail::get_u32(data + 4));
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
  RF_CHECK(bit_depth == 8, IoError, "png: only 8-bit supported, got depth ", bit_depth);
  RF_CHECK(interlace == 0, IoError, "png: interlaced images unsupported");
  RF_CHECK(color_type == 0 || color_type == 2, IoError,
           "png: only grayscale/RGB supported, got color type ", color_type);
  d.channels = (color_type == 0) ? 1 : 3;

  std::size_t stride = std::size_t(d.width) * d.channels;
  std::size_t raw_size = (stride + 1) * std::size_t(d.height);
  std::vector<std::uint8_t> raw(raw_size);
  uLongf out_len = uLongf(raw_size);
  int rc = ::uncompress(raw.data(), &out_len, idat.data(), uLong(idat.size()));
  RF_CHECK(rc == Z_OK && out_len == raw_size, IoError, "png: zlib inflate failed");

  // Undo per-row filters.
  d.pixels.assign(stride * std::size_t(d.height), 0);
  int bpp = d.channels;
  for (int y = 0; y < d.height; ++y) {
    const std::uint8_t* in = raw.data() + std::size_t(y) * (stride + 1);
    std::uint8_t filter = in[0];
    const std::uint8_t* src = in + 1;
    std::uint8_t* cur = d.pixels.data() + std::size_t(y) * stride;
    const std::uint8_t* prev = (y > 0) ? d.pixels.data() + std::size_t(y - 1) * stride : nullptr;
    for (std::size_t x = 0; x < stride; ++x) {
      int a = (x >= std::size_t(bpp)) ? cur[x - bpp] : 0;
      int b = prev ? prev[x] : 0;
      int c = (prev && x >= std::size_t(bpp)) ? prev[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += detail::paeth(a, b, c); break;
        default: RF_CHECK(false, IoError, "png: unknown filter ", int(filter));
      }
      cur[x] = std::uint8_t(v & 0xff);
    }
  }
  return d;
}

inline void write_file(const std::string& path, const std::uint8_t* pixels,
                       int width, int height, int channels) {
  std::vector<std::uint8_t> bytes = encode(pixels, width, height, channels);
  std::ofstream f(path, std::ios::binary);
  RF_CHECK(f.good(), IoError, "cannot open for write: ", path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  RF_CHECK(f.good(), IoError, "write failed: ", path);
}

inline Decoded read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  RF_CHECK(f.good(), IoError, "cannot open: ", path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace roomfill::png
