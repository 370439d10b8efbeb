#ifndef POLARSCAN_SYNTHETIC_HPP
#define POLARSCAN_SYNTHETIC_HPP

/**
 * @file synthetic.hpp
 * @brief Deterministic synthetic loop datasets.
 *
 * A static scene of building facades, poles and shrubs is laid out around a
 * circular road. The sensor drives the circle at a constant step, so frames
 * one lap apart revisit the same place with the same heading; per-frame
 * Gaussian range noise makes revisits near-duplicates rather than copies.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "polarscan/binary_io.hpp"
#include "polarscan/pointcloud.hpp"

namespace polarscan::synthetic {

struct LoopSpec {
  std::size_t frames = 400;
  std::size_t frames_per_lap = 220;
  double road_radius = 40.0;    ///< meters
  double sensor_range = 30.0;   ///< points beyond this are not observed
  double point_spacing = 0.35;  ///< surface sampling step, meters
  double noise_sigma = 0.02;    ///< per-point position noise, meters
  double frame_period = 0.1;    ///< seconds
  std::uint64_t seed = 7;
};

namespace detail {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    // Box-Muller; avoids implementation-defined std::normal_distribution.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace detail

/// World-frame scene points with a fixed per-point intensity.
inline std::vector<PointRecord> make_scene(const LoopSpec& spec) {
  detail::Rng rng(spec.seed);
  std::vector<PointRecord> pts;
  const double step = spec.point_spacing;
  const double two_pi = 2.0 * std::numbers::pi;

  // Building facades: wall segments tangent to the road on both sides.
  const int buildings = 36;
  for (int b = 0; b < buildings; ++b) {
    const double phi = rng.uniform(0.0, two_pi);
    const bool outer = rng.uniform() < 0.6;
    const double offset = rng.uniform(8.0, 16.0);
    const double r = spec.road_radius + (outer ? offset : -offset);
    const double half_len = rng.uniform(4.0, 12.0);
    const double height = rng.uniform(3.0, 14.0);
    const double reflect = rng.uniform(0.1, 0.9);
    const double cx = r * std::cos(phi), cy = r * std::sin(phi);
    const double tx = -std::sin(phi), ty = std::cos(phi);
    const double nx = std::cos(phi), ny = std::sin(phi);
    const double depth = rng.uniform(4.0, 10.0) * (outer ? 1.0 : -1.0);
    for (double s = -half_len; s <= half_len; s += step) {
      for (double z = 0.0; z <= height; z += step) {
        const double band = 0.15 * std::sin(z * 1.7 + b);
        pts.push_back({cx + s * tx, cy + s * ty, z, std::clamp(reflect + band, 0.0, 1.0), 0.0});
      }
    }
    // Side walls give corners.
    for (double sgn : {-1.0, 1.0}) {
      for (double d = step; d <= std::abs(depth); d += step) {
        for (double z = 0.0; z <= height; z += step) {
          const double dd = depth > 0 ? d : -d;
          pts.push_back({cx + sgn * half_len * tx + dd * nx, cy + sgn * half_len * ty + dd * ny, z,
                         reflect * 0.8, 0.0});
        }
      }
    }
  }

  // Poles: thin vertical cylinders near the curb.
  const int poles = 60;
  for (int p = 0; p < poles; ++p) {
    const double phi = rng.uniform(0.0, two_pi);
    const double r = spec.road_radius + (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(4.0, 6.0);
    const double cx = r * std::cos(phi), cy = r * std::sin(phi);
    const double h = rng.uniform(3.0, 8.0);
    const double radius = 0.15;
    for (double z = 0.0; z <= h; z += step / 2) {
      for (int a = 0; a < 8; ++a) {
        const double ang = a * two_pi / 8;
        pts.push_back({cx + radius * std::cos(ang), cy + radius * std::sin(ang), z, 0.95, 0.0});
      }
    }
  }

  // Shrubs: noisy spheres.
  const int shrubs = 50;
  for (int s = 0; s < shrubs; ++s) {
    const double phi = rng.uniform(0.0, two_pi);
    const double r = spec.road_radius + (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(5.0, 8.0);
    const double cx = r * std::cos(phi), cy = r * std::sin(phi);
    const double rad = rng.uniform(0.8, 2.0);
    const int n = static_cast<int>(4.0 * std::numbers::pi * rad * rad / (step * step));
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform(-1.0, 1.0), t = rng.uniform(0.0, two_pi);
      const double q = std::sqrt(1.0 - u * u);
      const double rr = rad * rng.uniform(0.85, 1.0);
      pts.push_back({cx + rr * q * std::cos(t), cy + rr * q * std::sin(t), rad + rr * u,
                     rng.uniform(0.2, 0.5), 0.0});
    }
  }
  return pts;
}

struct SensorPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

inline std::vector<SensorPose> make_trajectory(const LoopSpec& spec) {
  std::vector<SensorPose> out(spec.frames);
  for (std::size_t i = 0; i < spec.frames; ++i) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(i % spec.frames_per_lap) /
                       static_cast<double>(spec.frames_per_lap);
    out[i] = {spec.road_radius * std::cos(phi), spec.road_radius * std::sin(phi),
              phi + std::numbers::pi / 2.0};
  }
  return out;
}

inline PoseTrack make_pose_track(const LoopSpec& spec) {
  const auto traj = make_trajectory(spec);
  std::vector<PoseEntry> entries;
  entries.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    entries.push_back({i, static_cast<double>(i) * spec.frame_period, {traj[i].x, traj[i].y, 0.0}});
  }
  return PoseTrack(std::move(entries));
}

/// Sensor-frame scan (x forward, sensor 1.8 m above ground) of `scene`.
inline PointCloud render_frame(const std::vector<PointRecord>& scene, const SensorPose& pose,
                               std::uint64_t frame_id, const LoopSpec& spec) {
  detail::Rng rng(spec.seed * 0x9E3779B97F4A7C15ULL + frame_id + 1);
  constexpr double kSensorHeight = 1.8;
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  const double r2max = spec.sensor_range * spec.sensor_range;
  PointCloud cloud;
  cloud.frame_id = frame_id;
  cloud.timestamp = static_cast<double>(frame_id) * spec.frame_period;
  for (const auto& p : scene) {
    const double dx = p.x - pose.x, dy = p.y - pose.y;
    if (dx * dx + dy * dy > r2max) continue;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    cloud.points.push_back({lx + spec.noise_sigma * rng.normal(), ly + spec.noise_sigma * rng.normal(),
                            p.z - kSensorHeight + spec.noise_sigma * rng.normal(),
                            std::clamp(p.intensity + 0.01 * rng.normal(), 0.0, 1.0), 0.0});
  }
  return cloud;
}

/// 32 beams from -25 to +15 degrees.
inline SensorProfile make_sensor_profile() {
  SensorProfile profile;
  profile.name = "synthetic-32";
  for (int i = 0; i < 32; ++i) profile.beam_elevations_deg.push_back(-25.0 + 40.0 * i / 31.0);
  profile.max_range = 80.0;
  return profile;
}

inline std::string serialize_sensor_profile(const SensorProfile& profile) {
  std::string out = "name=" + profile.name + "\nbeams=";
  for (std::size_t i = 0; i < profile.beam_elevations_deg.size(); ++i) {
    if (i) out += ',';
    out += text::format_double(profile.beam_elevations_deg[i]);
  }
  out += "\nmax_range=" + text::format_double(profile.max_range) + "\n";
  return out;
}

/// Writes clouds/NNNNNN.bin, poses.csv and sensor.profile under `dir`.
inline void write_dataset(const std::filesystem::path& dir, const LoopSpec& spec) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "clouds");
  const auto scene = make_scene(spec);
  const auto traj = make_trajectory(spec);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.bin", i);
    io::write_file(dir / "clouds" / name, serialize_kitti_bin(render_frame(scene, traj[i], i, spec)));
  }
  io::write_text_file(dir / "poses.csv", serialize_poses(make_pose_track(spec)));
  io::write_text_file(dir / "sensor.profile", serialize_sensor_profile(make_sensor_profile()));
}

}  // namespace polarscan::synthetic

#endif  // POLARSCAN_SYNTHETIC_HPP
