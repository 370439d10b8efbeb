#ifndef POLARSCAN_PNG_HPP
#define POLARSCAN_PNG_HPP

// Minimal 8-bit grayscale PNG writer for inspecting projection channels.

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "polarscan/errors.hpp"
#include "polarscan/projection.hpp"

namespace polarscan {

namespace detail {

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_chunk(std::vector<std::uint8_t>& out, std::string_view type,
                      std::span<const std::uint8_t> payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t type_pos = out.size();
  out.insert(out.end(), type.begin(), type.end());
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = crc32(0L, out.data() + type_pos, static_cast<uInt>(out.size() - type_pos));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

/// Encodes a row-major 8-bit grayscale raster.
inline std::vector<std::uint8_t> encode_gray_png(std::span<const std::uint8_t> pixels,
                                                 std::size_t width, std::size_t height) {
  if (pixels.size() != width * height) throw ShapeError("png: pixel count mismatch");
  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

  std::vector<std::uint8_t> ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // depth 8, grayscale, deflate, filter 0, no interlace
  detail::put_chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(height * (width + 1));
  for (std::size_t r = 0; r < height; ++r) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), pixels.begin() + static_cast<std::ptrdiff_t>(r * width),
               pixels.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()),
                Z_BEST_COMPRESSION) != Z_OK) {
    throw Error("png: zlib compression failed");
  }
  packed.resize(packed_size);
  detail::put_chunk(out, "IDAT", packed);
  detail::put_chunk(out, "IEND", {});
  return out;
}

/// One channel of `img` as grayscale, value = round(255 * pixel).
inline std::vector<std::uint8_t> render_png(const ProjectionImage& img, std::string_view channel) {
  const std::size_t ch = img.channel_index(channel);
  std::vector<std::uint8_t> gray(img.height * img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const double v = std::clamp(static_cast<double>(img.at(r, c, ch)), 0.0, 1.0);
      gray[r * img.width + c] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
  }
  return encode_gray_png(gray, img.width, img.height);
}

/// Decodes PNGs produced by encode_gray_png (grayscale, 8-bit, filter 0).
/// Used for round-trip checks; not a general PNG reader.
inline std::vector<std::uint8_t> decode_gray_png(std::span<const std::uint8_t> png,
                                                 std::size_t& width, std::size_t& height) {
  auto be32 = [&](std::size_t pos) {
    return (std::uint32_t{png[pos]} << 24) | (std::uint32_t{png[pos + 1]} << 16) |
           (std::uint32_t{png[pos + 2]} << 8) | std::uint32_t{png[pos + 3]};
  };
  if (png.size() < 8 || png[0] != 0x89 || png[1] != 'P') throw FormatError("png: bad signature");
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 12 <= png.size()) {
    const std::uint32_t len = be32(pos);
    const std::string_view type(reinterpret_cast<const char*>(png.data() + pos + 4), 4);
    const auto* body = png.data() + pos + 8;
    if (pos + 12 + len > png.size()) throw FormatError("png: truncated chunk");
    if (type == "IHDR") {
      width = be32(pos + 8);
      height = be32(pos + 12);
      if (body[8] != 8 || body[9] != 0) throw FormatError("png: only 8-bit grayscale supported");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), body, body + len);
    }
    pos += 12 + len;
  }
  std::vector<std::uint8_t> raw(height * (width + 1));
  uLongf raw_size = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_size != raw.size()) {
    throw FormatError("png: bad image data");
  }
  std::vector<std::uint8_t> pixels;
  pixels.reserve(width * height);
  for (std::size_t r = 0; r < height; ++r) {
    if (raw[r * (width + 1)] != 0) throw FormatError("png: unsupported filter");
    const auto* row = raw.data() + r * (width + 1) + 1;
    pixels.insert(pixels.end(), row, row + width);
  }
  return pixels;
}

}  // namespace polarscan

#endif  // POLARSCAN_PNG_HPP
