#ifndef POLARSCAN_POINTCLOUD_HPP
#define POLARSCAN_POINTCLOUD_HPP

/**
 * @file pointcloud.hpp
 * @brief Point cloud, pose track and sensor profile types with their parsers.
 *
 * Points carry x, y, z in meters, a return intensity and a curvature slot
 * that stays 0 until estimate_curvature() fills it. Every filter preserves
 * point order, since projection collision handling is order dependent.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polarscan/errors.hpp"
#include "polarscan/text.hpp"

namespace polarscan {

struct PointRecord {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
  double curvature = 0.0;  ///< per-frame normalized curvature once estimated

  friend bool operator==(const PointRecord&, const PointRecord&) = default;
};

struct PointCloud {
  std::uint64_t frame_id = 0;
  double timestamp = 0.0;
  std::vector<PointRecord> points;

  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] bool empty() const { return points.empty(); }
};

struct PoseEntry {
  std::uint64_t frame_id = 0;
  double timestamp = 0.0;
  std::array<double, 3> position{};
};

/// Ordered pose samples; frame ids strictly increasing.
class PoseTrack {
 public:
  PoseTrack() = default;
  explicit PoseTrack(std::vector<PoseEntry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 1; i < entries_.size(); ++i) {
      if (entries_[i].frame_id <= entries_[i - 1].frame_id) {
        throw FormatError("poses: frame ids must be strictly increasing (frame " +
                          std::to_string(entries_[i].frame_id) + " after " +
                          std::to_string(entries_[i - 1].frame_id) + ")");
      }
      if (entries_[i].timestamp < entries_[i - 1].timestamp) {
        throw FormatError("poses: timestamps must be non-decreasing at frame " +
                          std::to_string(entries_[i].frame_id));
      }
    }
  }

  [[nodiscard]] const std::vector<PoseEntry>& entries() const { return entries_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] bool empty() const { return entries_.empty(); }

  [[nodiscard]] const PoseEntry* find(std::uint64_t frame_id) const {
    const auto it = std::lower_bound(
        entries_.begin(), entries_.end(), frame_id,
        [](const PoseEntry& e, std::uint64_t f) { return e.frame_id < f; });
    if (it == entries_.end() || it->frame_id != frame_id) return nullptr;
    return &*it;
  }

 private:
  std::vector<PoseEntry> entries_;
};

/// LiDAR vertical beam layout.
struct SensorProfile {
  std::string name;
  std::vector<double> beam_elevations_deg;  ///< ascending
  double max_range = 100.0;

  [[nodiscard]] std::size_t num_beams() const { return beam_elevations_deg.size(); }

  void validate() const {
    if (!std::is_sorted(beam_elevations_deg.begin(), beam_elevations_deg.end())) {
      throw FormatError("sensor profile '" + name + "': beam elevations must be ascending");
    }
    if (!(max_range > 0.0) || !std::isfinite(max_range)) {
      throw FormatError("sensor profile '" + name + "': max_range must be positive");
    }
  }
};

/// Axis-aligned box in meters, inclusive on both ends.
struct Aabb {
  std::array<double, 3> min{-1e9, -1e9, -1e9};
  std::array<double, 3> max{1e9, 1e9, 1e9};

  [[nodiscard]] bool contains(const PointRecord& p) const {
    return p.x >= min[0] && p.x <= max[0] && p.y >= min[1] && p.y <= max[1] &&
           p.z >= min[2] && p.z <= max[2];
  }
};

/// KITTI Velodyne layout: 4 little-endian float32 (x, y, z, intensity) per point.
inline PointCloud parse_kitti_bin(std::span<const std::uint8_t> bytes,
                                  std::uint64_t frame_id = 0, double timestamp = 0.0) {
  constexpr std::size_t kRecord = 4 * sizeof(float);
  if (bytes.size() % kRecord != 0) {
    throw FormatError("kitti bin: length " + std::to_string(bytes.size()) +
                      " is not a multiple of 16");
  }
  PointCloud cloud{frame_id, timestamp, {}};
  const std::size_t n = bytes.size() / kRecord;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    float v[4];
    std::memcpy(v, bytes.data() + i * kRecord, kRecord);
    for (float f : v) {
      if (!std::isfinite(f)) {
        throw ParseError("kitti bin: non-finite value in point " + std::to_string(i));
      }
    }
    cloud.points.push_back({v[0], v[1], v[2], v[3], 0.0});
  }
  return cloud;
}

inline std::vector<std::uint8_t> serialize_kitti_bin(const PointCloud& cloud) {
  std::vector<std::uint8_t> out(cloud.size() * 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const float v[4] = {static_cast<float>(p.x), static_cast<float>(p.y),
                        static_cast<float>(p.z), static_cast<float>(p.intensity)};
    std::memcpy(out.data() + i * 16, v, 16);
  }
  return out;
}

/// CSV with a header naming x, y, z and intensity (any column order).
inline PointCloud parse_csv(std::string_view csv, std::uint64_t frame_id = 0,
                            double timestamp = 0.0) {
  const auto rows = text::lines(csv);
  if (rows.empty()) throw FormatError("points csv: missing header");

  const auto header = text::split(rows.front(), ',');
  constexpr std::array<std::string_view, 4> names = {"x", "y", "z", "intensity"};
  std::array<std::size_t, 4> col{};
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto it = std::find_if(header.begin(), header.end(),
                                 [&](std::string_view h) { return text::trim(h) == names[k]; });
    if (it == header.end()) {
      throw FormatError("points csv: missing column '" + std::string(names[k]) + "'");
    }
    col[k] = static_cast<std::size_t>(it - header.begin());
  }

  PointCloud cloud{frame_id, timestamp, {}};
  cloud.points.reserve(rows.size() - 1);
  for (std::size_t line = 1; line < rows.size(); ++line) {
    if (text::trim(rows[line]).empty()) continue;
    const auto fields = text::split(rows[line], ',');
    if (fields.size() != header.size()) {
      throw FormatError("points csv: line " + std::to_string(line + 1) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    }
    double v[4];
    for (std::size_t k = 0; k < 4; ++k) {
      const auto d = text::to_double(fields[col[k]]);
      if (!d || !std::isfinite(*d)) {
        throw ParseError("points csv: bad number '" + std::string(text::trim(fields[col[k]])) +
                         "' on line " + std::to_string(line + 1));
      }
      v[k] = *d;
    }
    cloud.points.push_back({v[0], v[1], v[2], v[3], 0.0});
  }
  return cloud;
}

/// Writes values as float32 so parse_csv(serialize_csv(c)) matches the
/// float32 round trip of c.
inline std::string serialize_csv(const PointCloud& cloud) {
  std::string out = "x,y,z,intensity\n";
  for (const auto& p : cloud.points) {
    for (double v : {p.x, p.y, p.z}) {
      out += text::format_double(static_cast<float>(v));
      out += ',';
    }
    out += text::format_double(static_cast<float>(p.intensity));
    out += '\n';
  }
  return out;
}

/// Keeps points inside roi and, when ground_z is set, strictly above it.
inline PointCloud crop_filter(const PointCloud& cloud, const Aabb& roi,
                              std::optional<double> ground_z = std::nullopt) {
  for (int a = 0; a < 3; ++a) {
    if (!(roi.min[a] < roi.max[a])) throw ConfigError("crop_filter: roi min must be < max");
  }
  PointCloud out{cloud.frame_id, cloud.timestamp, {}};
  out.points.reserve(cloud.size());
  std::copy_if(cloud.points.begin(), cloud.points.end(), std::back_inserter(out.points),
               [&](const PointRecord& p) {
                 return roi.contains(p) && (!ground_z || p.z > *ground_z);
               });
  return out;
}

/// CSV `frame,timestamp,x,y,z`.
inline PoseTrack load_poses(std::string_view csv) {
  const auto rows = text::lines(csv);
  if (rows.empty()) return {};
  const auto header = text::split(rows.front(), ',');
  constexpr std::array<std::string_view, 5> names = {"frame", "timestamp", "x", "y", "z"};
  if (header.size() != names.size()) throw FormatError("poses csv: expected header frame,timestamp,x,y,z");
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (text::trim(header[k]) != names[k]) {
      throw FormatError("poses csv: expected header frame,timestamp,x,y,z");
    }
  }
  std::vector<PoseEntry> entries;
  for (std::size_t line = 1; line < rows.size(); ++line) {
    if (text::trim(rows[line]).empty()) continue;
    const auto f = text::split(rows[line], ',');
    if (f.size() != 5) {
      throw FormatError("poses csv: line " + std::to_string(line + 1) + " needs 5 fields");
    }
    const auto frame = text::to_int(f[0]);
    if (!frame || *frame < 0) {
      throw ParseError("poses csv: bad frame id on line " + std::to_string(line + 1));
    }
    PoseEntry e;
    e.frame_id = static_cast<std::uint64_t>(*frame);
    double v[4];
    for (int k = 0; k < 4; ++k) {
      const auto d = text::to_double(f[k + 1]);
      if (!d || !std::isfinite(*d)) {
        throw ParseError("poses csv: bad number on line " + std::to_string(line + 1));
      }
      v[k] = *d;
    }
    e.timestamp = v[0];
    e.position = {v[1], v[2], v[3]};
    entries.push_back(e);
  }
  return PoseTrack(std::move(entries));
}

inline std::string serialize_poses(const PoseTrack& track) {
  std::string out = "frame,timestamp,x,y,z\n";
  for (const auto& e : track.entries()) {
    out += std::to_string(e.frame_id) + ',' + text::format_double(e.timestamp);
    for (double v : e.position) out += ',' + text::format_double(v);
    out += '\n';
  }
  return out;
}

/// `key=value` lines: name, beams (comma separated degrees), max_range.
/// '#' starts a comment.
inline SensorProfile parse_sensor_profile(std::string_view body) {
  SensorProfile profile;
  bool have_beams = false;
  std::optional<std::int64_t> declared_beams;
  for (auto line : text::lines(body)) {
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("sensor profile: expected key=value, got '" + std::string(line) + "'");
    }
    const auto key = text::trim(line.substr(0, eq));
    const auto value = text::trim(line.substr(eq + 1));
    if (key == "name") {
      profile.name = std::string(value);
    } else if (key == "beams") {
      for (auto item : text::split(value, ',')) {
        const auto d = text::to_double(item);
        if (!d || !std::isfinite(*d)) {
          throw ParseError("sensor profile: bad beam angle '" + std::string(item) + "'");
        }
        profile.beam_elevations_deg.push_back(*d);
      }
      have_beams = true;
    } else if (key == "max_range") {
      const auto d = text::to_double(value);
      if (!d) throw ParseError("sensor profile: bad max_range '" + std::string(value) + "'");
      profile.max_range = *d;
    } else if (key == "num_beams") {
      declared_beams = text::to_int(value);
      if (!declared_beams) throw ParseError("sensor profile: bad num_beams '" + std::string(value) + "'");
    } else {
      throw FormatError("sensor profile: unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_beams) throw FormatError("sensor profile: missing beams");
  if (declared_beams && static_cast<std::size_t>(*declared_beams) != profile.num_beams()) {
    throw FormatError("sensor profile: num_beams does not match beams list");
  }
  profile.validate();
  return profile;
}

}  // namespace polarscan

#endif  // POLARSCAN_POINTCLOUD_HPP
