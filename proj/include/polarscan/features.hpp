#ifndef POLARSCAN_FEATURES_HPP
#define POLARSCAN_FEATURES_HPP

/**
 * @file features.hpp
 * @brief c x h x w token grids: the built-in statistics encoder and the PFEA
 *        interchange format written by external backbones.
 *
 * The baseline encoder tiles an image into patch x patch cells (edge cells
 * truncated) and emits, for every input channel, eight statistics per cell
 * in this fixed order (layout version 1):
 *
 *   0 mean   1 std (population)   2 min   3 max   4 fill ratio
 *   5 mean |horizontal forward difference|   6 mean |vertical forward difference|
 *   7 value at the cell centroid pixel
 *
 * Output channel index = input_channel * 8 + statistic; channels beyond
 * 8 * C are zero.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polarscan/binary_io.hpp"
#include "polarscan/errors.hpp"
#include "polarscan/projection.hpp"

namespace polarscan {

enum class FeatureSource : std::uint8_t { kBaseline = 0, kExternal = 1 };

inline constexpr std::size_t kStatsPerChannel = 8;
inline constexpr std::size_t kDefaultPatch = 16;
inline constexpr std::size_t kDefaultBaselineChannels = 64;

struct FeatureMap {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<float> data;  ///< (c, h, w) order
  std::uint64_t frame_id = 0;
  FeatureSource source = FeatureSource::kBaseline;

  float& at(std::size_t ch, std::size_t i, std::size_t j) { return data[(ch * h + i) * w + j]; }
  [[nodiscard]] float at(std::size_t ch, std::size_t i, std::size_t j) const {
    return data[(ch * h + i) * w + j];
  }
  [[nodiscard]] std::size_t tokens() const { return h * w; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

using Token = std::vector<double>;

inline FeatureMap baseline_encode(const ProjectionImage& img, std::size_t patch = kDefaultPatch,
                                  std::size_t c_out = kDefaultBaselineChannels) {
  if (patch < 1) throw ConfigError("baseline_encode: patch must be >= 1");
  const std::size_t nch = img.channels();
  if (c_out < kStatsPerChannel * nch) {
    throw ConfigError("baseline_encode: c_out " + std::to_string(c_out) + " < 8 x " +
                      std::to_string(nch) + " input channels");
  }
  if (patch > img.height && patch > img.width) {
    throw DegenerateInputError("baseline_encode: patch larger than both image dimensions");
  }

  FeatureMap fm;
  fm.c = c_out;
  fm.h = (img.height + patch - 1) / patch;
  fm.w = (img.width + patch - 1) / patch;
  fm.frame_id = img.frame_id;
  fm.source = FeatureSource::kBaseline;
  fm.data.assign(fm.c * fm.h * fm.w, 0.0f);

  for (std::size_t ci = 0; ci < fm.h; ++ci) {
    const std::size_t r0 = ci * patch, r1 = std::min(r0 + patch, img.height);
    for (std::size_t cj = 0; cj < fm.w; ++cj) {
      const std::size_t c0 = cj * patch, c1 = std::min(c0 + patch, img.width);
      const double count = static_cast<double>((r1 - r0) * (c1 - c0));

      std::size_t filled = 0;
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) filled += img.filled(r, c) ? 1 : 0;
      }

      for (std::size_t ch = 0; ch < nch; ++ch) {
        double sum = 0.0, lo = img.at(r0, c0, ch), hi = lo;
        for (std::size_t r = r0; r < r1; ++r) {
          for (std::size_t c = c0; c < c1; ++c) {
            const double v = img.at(r, c, ch);
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
        }
        const double mean = sum / count;
        double var = 0.0, du = 0.0, dv = 0.0;
        std::size_t n_du = 0, n_dv = 0;
        for (std::size_t r = r0; r < r1; ++r) {
          for (std::size_t c = c0; c < c1; ++c) {
            const double v = img.at(r, c, ch);
            var += (v - mean) * (v - mean);
            if (c + 1 < c1) {
              du += std::abs(static_cast<double>(img.at(r, c + 1, ch)) - v);
              ++n_du;
            }
            if (r + 1 < r1) {
              dv += std::abs(static_cast<double>(img.at(r + 1, c, ch)) - v);
              ++n_dv;
            }
          }
        }
        const double stats[kStatsPerChannel] = {
            mean,
            std::sqrt(var / count),
            lo,
            hi,
            static_cast<double>(filled) / count,
            n_du ? du / static_cast<double>(n_du) : 0.0,
            n_dv ? dv / static_cast<double>(n_dv) : 0.0,
            img.at(r0 + (r1 - r0 - 1) / 2, c0 + (c1 - c0 - 1) / 2, ch),
        };
        for (std::size_t s = 0; s < kStatsPerChannel; ++s) {
          fm.at(ch * kStatsPerChannel + s, ci, cj) = static_cast<float>(stats[s]);
        }
      }
    }
  }
  return fm;
}

/// h*w tokens in row-major cell order; token (i, j) = data[:, i, j].
inline std::vector<Token> flatten_tokens(const FeatureMap& fm) {
  std::vector<Token> tokens(fm.h * fm.w, Token(fm.c));
  for (std::size_t ch = 0; ch < fm.c; ++ch) {
    for (std::size_t i = 0; i < fm.h; ++i) {
      for (std::size_t j = 0; j < fm.w; ++j) tokens[i * fm.w + j][ch] = fm.at(ch, i, j);
    }
  }
  return tokens;
}

inline FeatureMap unflatten_tokens(std::span<const Token> tokens, std::size_t h, std::size_t w,
                                   std::uint64_t frame_id = 0,
                                   FeatureSource source = FeatureSource::kExternal) {
  if (tokens.size() != h * w) throw ShapeError("unflatten_tokens: token count != h*w");
  FeatureMap fm;
  fm.c = tokens.empty() ? 0 : tokens.front().size();
  fm.h = h;
  fm.w = w;
  fm.frame_id = frame_id;
  fm.source = source;
  fm.data.resize(fm.c * h * w);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t].size() != fm.c) throw ShapeError("unflatten_tokens: ragged tokens");
    for (std::size_t ch = 0; ch < fm.c; ++ch) {
      fm.at(ch, t / w, t % w) = static_cast<float>(tokens[t][ch]);
    }
  }
  return fm;
}

// PFEA: "PFEA", u32 version, u32 c, u32 h, u32 w, u64 frame_id, u8 source,
// c*h*w float32 in (c, h, w) order.
inline constexpr std::uint32_t kPfeaVersion = 1;

inline std::vector<std::uint8_t> save_feature_map(const FeatureMap& fm) {
  io::ByteWriter w;
  w.magic("PFEA");
  w.u32(kPfeaVersion);
  w.u32(static_cast<std::uint32_t>(fm.c));
  w.u32(static_cast<std::uint32_t>(fm.h));
  w.u32(static_cast<std::uint32_t>(fm.w));
  w.u64(fm.frame_id);
  w.u8(static_cast<std::uint8_t>(fm.source));
  for (float v : fm.data) w.f32(v);
  return std::move(w).bytes();
}

inline FeatureMap load_feature_map(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "PFEA");
  r.expect_magic("PFEA");
  if (const auto v = r.u32(); v != kPfeaVersion) {
    throw FormatError("PFEA: unsupported version " + std::to_string(v));
  }
  FeatureMap fm;
  fm.c = r.u32();
  fm.h = r.u32();
  fm.w = r.u32();
  fm.frame_id = r.u64();
  const auto src = r.u8();
  if (src > 1) throw FormatError("PFEA: bad source tag " + std::to_string(src));
  fm.source = static_cast<FeatureSource>(src);
  const std::size_t n = fm.c * fm.h * fm.w;
  if (r.remaining() != n * sizeof(float)) throw FormatError("PFEA: truncated or oversized payload");
  fm.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = r.f32();
    if (!std::isfinite(v)) {
      throw ValidationError("PFEA: non-finite value at index " + std::to_string(i));
    }
    fm.data[i] = v;
  }
  return fm;
}

}  // namespace polarscan

#endif  // POLARSCAN_FEATURES_HPP
