#ifndef POLARSCAN_PROJECTION_HPP
#define POLARSCAN_PROJECTION_HPP

/**
 * @file projection.hpp
 * @brief Point cloud to multi-channel image projections.
 *
 * Four layouts are supported:
 *   - BEV:   rows from x, columns from y, after recentering to the scan minimum
 *   - POLAR: rows from planar radius, columns from planar azimuth
 *   - RANGE: columns from azimuth over the full circle, rows from the nearest
 *            calibrated beam elevation
 *   - FRONT: RANGE restricted to an azimuth window [a_min, a_max]
 *
 * Channel values are min-max normalized per frame over the projected points,
 * except `range`, which is divided by the configured maximum range and
 * clipped. When several points land in one pixel the range channel keeps the
 * smallest range and every other channel keeps the last point in cloud
 * order. Empty pixels are zero in every channel.
 *
 * With ExtentMode::kFixed, BEV and POLAR use a half-open box [min, max) split
 * into H x W equal cells, so images are metrically comparable across frames
 * and shift exactly under cell-sized translations (BEV) or rotations (POLAR).
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "polarscan/binary_io.hpp"
#include "polarscan/errors.hpp"
#include "polarscan/pointcloud.hpp"
#include "polarscan/text.hpp"

namespace polarscan {

enum class ProjectionKind : std::uint8_t { kBev = 0, kPolar = 1, kRange = 2, kFront = 3 };
enum class Channel : std::uint8_t { kHeight, kRange, kIntensity, kCurvature };
enum class ExtentMode : std::uint8_t { kPerFrame, kFixed };

inline std::string_view to_string(ProjectionKind k) {
  switch (k) {
    case ProjectionKind::kBev: return "bev";
    case ProjectionKind::kPolar: return "polar";
    case ProjectionKind::kRange: return "range";
    case ProjectionKind::kFront: return "front";
  }
  return "?";
}

inline std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::kHeight: return "height";
    case Channel::kRange: return "range";
    case Channel::kIntensity: return "intensity";
    case Channel::kCurvature: return "curvature";
  }
  return "?";
}

inline ProjectionKind parse_projection_kind(std::string_view s) {
  const auto l = text::lower(s);
  if (l == "bev") return ProjectionKind::kBev;
  if (l == "polar") return ProjectionKind::kPolar;
  if (l == "range") return ProjectionKind::kRange;
  if (l == "front") return ProjectionKind::kFront;
  throw ConfigError("unknown projection kind '" + std::string(s) + "'");
}

inline Channel parse_channel(std::string_view s) {
  const auto l = text::lower(text::trim(s));
  if (l == "height") return Channel::kHeight;
  if (l == "range") return Channel::kRange;
  if (l == "intensity") return Channel::kIntensity;
  if (l == "curvature") return Channel::kCurvature;
  throw LookupError("unknown channel '" + std::string(s) + "'");
}

/// Fixed extents. BEV: a = x (rows), b = y (columns). POLAR: a = planar
/// radius (rows), b = azimuth in radians (columns).
struct FixedExtent {
  double a_min = 0.0;
  double a_max = 1.0;
  double b_min = 0.0;
  double b_max = 1.0;
};

struct ProjectionConfig {
  ProjectionKind kind = ProjectionKind::kBev;
  std::size_t height = 64;  ///< native rows (BEV/POLAR); RANGE/FRONT use the beam count
  std::size_t width = 512;
  std::vector<Channel> channels = {Channel::kHeight, Channel::kIntensity, Channel::kCurvature};
  double max_range = 100.0;
  double fov_min = -std::numbers::pi / 4.0;  ///< FRONT only
  double fov_max = std::numbers::pi / 4.0;
  ExtentMode extent_mode = ExtentMode::kPerFrame;
  FixedExtent fixed{};
  std::size_t out_height = 0;  ///< 0 keeps the native size
  std::size_t out_width = 0;

  void validate() const {
    if (height < 1 || width < 1) throw ConfigError("projection: H and W must be >= 1");
    if (!(fov_min < fov_max)) throw ConfigError("projection: fov a_min must be < a_max");
    if (channels.empty()) throw ConfigError("projection: at least one channel required");
    for (std::size_t i = 0; i < channels.size(); ++i) {
      for (std::size_t j = i + 1; j < channels.size(); ++j) {
        if (channels[i] == channels[j]) throw ConfigError("projection: duplicate channel");
      }
    }
    if (!(max_range > 0.0)) throw ConfigError("projection: max_range must be positive");
    if (extent_mode == ExtentMode::kFixed &&
        (!(fixed.a_min < fixed.a_max) || !(fixed.b_min < fixed.b_max))) {
      throw ConfigError("projection: fixed extent min must be < max");
    }
    if ((out_height == 0) != (out_width == 0)) {
      throw ConfigError("projection: output size needs both height and width");
    }
  }

  [[nodiscard]] bool wants(Channel c) const {
    return std::find(channels.begin(), channels.end(), c) != channels.end();
  }
};

/// H x W x C image, row-major with interleaved channels.
struct ProjectionImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::string> channel_labels;
  ProjectionKind kind = ProjectionKind::kBev;
  std::uint64_t frame_id = 0;
  std::vector<float> data;
  std::vector<std::uint8_t> fill_mask;

  [[nodiscard]] std::size_t channels() const { return channel_labels.size(); }

  float& at(std::size_t row, std::size_t col, std::size_t ch) {
    return data[(row * width + col) * channels() + ch];
  }
  [[nodiscard]] float at(std::size_t row, std::size_t col, std::size_t ch) const {
    return data[(row * width + col) * channels() + ch];
  }
  [[nodiscard]] bool filled(std::size_t row, std::size_t col) const {
    return fill_mask[row * width + col] != 0;
  }

  [[nodiscard]] std::size_t channel_index(std::string_view label) const {
    const auto it = std::find(channel_labels.begin(), channel_labels.end(), label);
    if (it == channel_labels.end()) {
      throw LookupError("image has no channel '" + std::string(label) + "'");
    }
    return static_cast<std::size_t>(it - channel_labels.begin());
  }

  friend bool operator==(const ProjectionImage&, const ProjectionImage&) = default;
};

// ---------------------------------------------------------------------------
// Pixel index rules
// ---------------------------------------------------------------------------

/// floor(ratio * scale) clamped to [0, n-1]; non-finite ratios map to 0.
inline std::size_t clamped_floor(double value, std::size_t n) {
  if (!(value > 0.0)) return 0;  // also catches NaN
  const double f = std::floor(value);
  if (f >= static_cast<double>(n - 1)) return n - 1;
  return static_cast<std::size_t>(f);
}

/// Recentered linear mapping floor(offset / extent * (n - 1)); a zero
/// extent maps everything to index 0.
inline std::size_t extent_index(double offset, double extent, std::size_t n) {
  if (!(extent > 0.0)) return 0;
  return clamped_floor(offset / extent * static_cast<double>(n - 1), n);
}

/// floor(0.5 (1 - theta / pi) W) clamped to [0, W-1].
inline std::size_t range_column(double theta, std::size_t width) {
  return clamped_floor(0.5 * (1.0 - theta / std::numbers::pi) * static_cast<double>(width), width);
}

/// floor((theta - a_min) / (a_max - a_min) W) clamped to [0, W-1].
inline std::size_t front_column(double theta, double a_min, double a_max, std::size_t width) {
  return clamped_floor((theta - a_min) / (a_max - a_min) * static_cast<double>(width), width);
}

/// argmin_k |phi - gamma_k|, lowest index on ties.
inline std::size_t nearest_beam(double phi_deg, std::span<const double> beams_deg) {
  std::size_t best = 0;
  double best_err = std::abs(phi_deg - beams_deg[0]);
  for (std::size_t k = 1; k < beams_deg.size(); ++k) {
    const double err = std::abs(phi_deg - beams_deg[k]);
    if (err < best_err) {
      best_err = err;
      best = k;
    }
  }
  return best;
}

/// Elevation in degrees; the origin itself is assigned 0.
inline double elevation_deg(double x, double y, double z) {
  const double r = std::sqrt(x * x + y * y + z * z);
  if (!(r > 0.0)) return 0.0;
  return std::asin(std::clamp(z / r, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

/// Half-open fixed-box cell index, or nullopt outside [lo, hi).
inline std::optional<std::size_t> fixed_cell(double value, double lo, double hi, std::size_t n) {
  if (!(value >= lo) || !(value < hi)) return std::nullopt;
  const double f = std::floor((value - lo) / (hi - lo) * static_cast<double>(n));
  return std::min(static_cast<std::size_t>(std::max(f, 0.0)), n - 1);
}

// ---------------------------------------------------------------------------
// Resizing
// ---------------------------------------------------------------------------

/// Bilinear resize of channels (half-pixel centres), nearest for the mask;
/// channel values at unfilled output pixels are forced to 0.
inline ProjectionImage resize(const ProjectionImage& in, std::size_t out_h, std::size_t out_w) {
  if (out_h == in.height && out_w == in.width) return in;
  ProjectionImage out;
  out.height = out_h;
  out.width = out_w;
  out.channel_labels = in.channel_labels;
  out.kind = in.kind;
  out.frame_id = in.frame_id;
  const std::size_t c = in.channels();
  out.data.assign(out_h * out_w * c, 0.0f);
  out.fill_mask.assign(out_h * out_w, 0);

  const double sy = static_cast<double>(in.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(in.width) / static_cast<double>(out_w);
  auto src = [](double dst, double scale, std::size_t n) {
    const double s = std::clamp((dst + 0.5) * scale - 0.5, 0.0, static_cast<double>(n - 1));
    const auto i0 = static_cast<std::size_t>(s);
    return std::tuple{i0, std::min(i0 + 1, n - 1), s - static_cast<double>(i0)};
  };
  auto nearest = [](double dst, double scale, std::size_t n) {
    return std::min(static_cast<std::size_t>((dst + 0.5) * scale), n - 1);
  };

  for (std::size_t r = 0; r < out_h; ++r) {
    const auto [y0, y1, wy] = src(static_cast<double>(r), sy, in.height);
    const std::size_t ny = nearest(static_cast<double>(r), sy, in.height);
    for (std::size_t col = 0; col < out_w; ++col) {
      const std::size_t nx = nearest(static_cast<double>(col), sx, in.width);
      const bool filled = in.filled(ny, nx);
      out.fill_mask[r * out_w + col] = filled ? 1 : 0;
      if (!filled) continue;
      const auto [x0, x1, wx] = src(static_cast<double>(col), sx, in.width);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = (1.0 - wx) * in.at(y0, x0, ch) + wx * in.at(y0, x1, ch);
        const double bot = (1.0 - wx) * in.at(y1, x0, ch) + wx * in.at(y1, x1, ch);
        const double v = (1.0 - wy) * top + wy * bot;
        out.at(r, col, ch) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

namespace detail {

struct Deposit {
  std::size_t point;
  std::size_t row;
  std::size_t col;
};

inline std::vector<Deposit> map_pixels(const PointCloud& cloud, const SensorProfile& profile,
                                       const ProjectionConfig& cfg, std::size_t rows,
                                       std::size_t cols) {
  const auto& pts = cloud.points;
  std::vector<Deposit> out;
  out.reserve(pts.size());

  switch (cfg.kind) {
    case ProjectionKind::kBev: {
      if (cfg.extent_mode == ExtentMode::kFixed) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
          const auto r = fixed_cell(pts[i].x, cfg.fixed.a_min, cfg.fixed.a_max, rows);
          const auto c = fixed_cell(pts[i].y, cfg.fixed.b_min, cfg.fixed.b_max, cols);
          if (r && c) out.push_back({i, *r, *c});
        }
        break;
      }
      double min_x = pts[0].x, min_y = pts[0].y;
      for (const auto& p : pts) {
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
      }
      double max_x = 0.0, max_y = 0.0;
      for (const auto& p : pts) {
        max_x = std::max(max_x, p.x - min_x);
        max_y = std::max(max_y, p.y - min_y);
      }
      for (std::size_t i = 0; i < pts.size(); ++i) {
        out.push_back({i, extent_index(pts[i].x - min_x, max_x, rows),
                       extent_index(pts[i].y - min_y, max_y, cols)});
      }
      break;
    }
    case ProjectionKind::kPolar: {
      std::vector<double> radius(pts.size()), theta(pts.size());
      for (std::size_t i = 0; i < pts.size(); ++i) {
        radius[i] = std::sqrt(pts[i].x * pts[i].x + pts[i].y * pts[i].y);
        theta[i] = std::atan2(pts[i].y, pts[i].x);
      }
      if (cfg.extent_mode == ExtentMode::kFixed) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
          const auto r = fixed_cell(radius[i], cfg.fixed.a_min, cfg.fixed.a_max, rows);
          const auto c = fixed_cell(theta[i], cfg.fixed.b_min, cfg.fixed.b_max, cols);
          if (r && c) out.push_back({i, *r, *c});
        }
        break;
      }
      const double max_r = *std::max_element(radius.begin(), radius.end());
      const auto [min_t, max_t] = std::minmax_element(theta.begin(), theta.end());
      const double span_t = *max_t - *min_t;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        out.push_back({i, extent_index(radius[i], max_r, rows),
                       extent_index(theta[i] - *min_t, span_t, cols)});
      }
      break;
    }
    case ProjectionKind::kRange:
    case ProjectionKind::kFront: {
      const auto& beams = profile.beam_elevations_deg;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& p = pts[i];
        const double theta = std::atan2(p.y, p.x);
        std::size_t col = 0;
        if (cfg.kind == ProjectionKind::kFront) {
          if (theta < cfg.fov_min || theta > cfg.fov_max) continue;
          col = front_column(theta, cfg.fov_min, cfg.fov_max, cols);
        } else {
          col = range_column(theta, cols);
        }
        out.push_back({i, nearest_beam(elevation_deg(p.x, p.y, p.z), beams), col});
      }
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Projects `cloud` into the image described by `cfg`. Curvature must have
/// been estimated when the curvature channel is requested.
inline ProjectionImage project(const PointCloud& cloud, const SensorProfile& profile,
                               const ProjectionConfig& cfg) {
  cfg.validate();
  if (cloud.empty()) throw DegenerateInputError("project: empty point cloud");
  const bool beam_based = cfg.kind == ProjectionKind::kRange || cfg.kind == ProjectionKind::kFront;
  if (beam_based && profile.beam_elevations_deg.empty()) {
    throw ConfigError("project: range/front projections need beam elevations");
  }

  const std::size_t rows = beam_based ? profile.num_beams() : cfg.height;
  const std::size_t cols = cfg.width;
  const auto deposits = detail::map_pixels(cloud, profile, cfg, rows, cols);
  if (deposits.empty()) {
    throw DegenerateInputError("project: no points inside the projection extent");
  }

  // Per-channel normalized values over the deposited points.
  const std::size_t nch = cfg.channels.size();
  std::vector<std::vector<double>> values(nch, std::vector<double>(deposits.size()));
  for (std::size_t ch = 0; ch < nch; ++ch) {
    auto& v = values[ch];
    for (std::size_t d = 0; d < deposits.size(); ++d) {
      const auto& p = cloud.points[deposits[d].point];
      switch (cfg.channels[ch]) {
        case Channel::kHeight: v[d] = p.z; break;
        case Channel::kIntensity: v[d] = p.intensity; break;
        case Channel::kCurvature: v[d] = p.curvature; break;
        case Channel::kRange:
          v[d] = std::clamp(std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z) / cfg.max_range, 0.0, 1.0);
          break;
      }
    }
    if (cfg.channels[ch] == Channel::kRange) continue;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double min_v = *lo, span = *hi - *lo;
    for (auto& x : v) x = span > 0.0 ? (x - min_v) / span : 0.0;
  }

  ProjectionImage img;
  img.height = rows;
  img.width = cols;
  img.kind = cfg.kind;
  img.frame_id = cloud.frame_id;
  for (auto c : cfg.channels) img.channel_labels.emplace_back(to_string(c));
  img.data.assign(rows * cols * nch, 0.0f);
  img.fill_mask.assign(rows * cols, 0);

  for (std::size_t d = 0; d < deposits.size(); ++d) {
    const auto [pt, r, c] = deposits[d];
    const bool first = img.fill_mask[r * cols + c] == 0;
    img.fill_mask[r * cols + c] = 1;
    for (std::size_t ch = 0; ch < nch; ++ch) {
      const auto v = static_cast<float>(values[ch][d]);
      float& px = img.at(r, c, ch);
      if (cfg.channels[ch] == Channel::kRange) {
        px = first ? v : std::min(px, v);
      } else {
        px = v;
      }
    }
  }

  if (cfg.out_height != 0) return resize(img, cfg.out_height, cfg.out_width);
  return img;
}

// ---------------------------------------------------------------------------
// PPRJ serialization
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kPprjVersion = 1;

/// Layout: "PPRJ", u32 version, u32 H, u32 W, u32 C, u8 kind, C x (u32 len +
/// ASCII label), H*W*C float32 row-major, H*W mask bytes.
inline std::vector<std::uint8_t> save_pprj(const ProjectionImage& img) {
  io::ByteWriter w;
  w.magic("PPRJ");
  w.u32(kPprjVersion);
  w.u32(static_cast<std::uint32_t>(img.height));
  w.u32(static_cast<std::uint32_t>(img.width));
  w.u32(static_cast<std::uint32_t>(img.channels()));
  w.u8(static_cast<std::uint8_t>(img.kind));
  for (const auto& label : img.channel_labels) w.str(label);
  for (float v : img.data) w.f32(v);
  for (auto m : img.fill_mask) w.u8(m ? 1 : 0);
  return std::move(w).bytes();
}

/// The format carries no frame id; callers pass it (usually from the file name).
inline ProjectionImage load_pprj(std::span<const std::uint8_t> bytes, std::uint64_t frame_id = 0) {
  io::ByteReader r(bytes, "PPRJ");
  r.expect_magic("PPRJ");
  if (const auto v = r.u32(); v != kPprjVersion) {
    throw FormatError("PPRJ: unsupported version " + std::to_string(v));
  }
  ProjectionImage img;
  img.frame_id = frame_id;
  img.height = r.u32();
  img.width = r.u32();
  const std::uint32_t c = r.u32();
  const std::uint8_t kind = r.u8();
  if (kind > 3) throw FormatError("PPRJ: bad projection kind " + std::to_string(kind));
  img.kind = static_cast<ProjectionKind>(kind);
  for (std::uint32_t i = 0; i < c; ++i) img.channel_labels.push_back(r.str());
  const std::size_t n = img.height * img.width;
  if (r.remaining() != n * c * sizeof(float) + n) throw FormatError("PPRJ: truncated or oversized payload");
  img.data.resize(n * c);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const float v = r.f32();
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw ValidationError("PPRJ: value at index " + std::to_string(i) + " outside [0,1]");
    }
    img.data[i] = v;
  }
  img.fill_mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.fill_mask[i] = r.u8() ? 1 : 0;
  return img;
}

}  // namespace polarscan

#endif  // POLARSCAN_PROJECTION_HPP
