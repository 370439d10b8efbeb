#ifndef POLARSCAN_CONFIG_HPP
#define POLARSCAN_CONFIG_HPP

/**
 * @file config.hpp
 * @brief Run configuration: `key = value` files with dotted keys (or
 *        `[section]` headers), overridden by command-line assignments.
 *
 * Example:
 *
 *     output = runs/kitti06
 *     [dataset]
 *     clouds = data/06/velodyne
 *     poses  = data/06/poses.csv
 *     sensor = profiles/hdl64.profile
 *     [projection]
 *     kind     = polar
 *     channels = height,intensity,curvature
 */

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "polarscan/aggregation.hpp"
#include "polarscan/curvature.hpp"
#include "polarscan/errors.hpp"
#include "polarscan/features.hpp"
#include "polarscan/pointcloud.hpp"
#include "polarscan/projection.hpp"
#include "polarscan/retrieval.hpp"
#include "polarscan/text.hpp"

namespace polarscan {

using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config_text(std::string_view body) {
  ConfigMap out;
  std::string section;
  std::size_t line_no = 0;
  for (auto line : text::lines(body)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(text::trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    out[key] = std::string(text::trim(line.substr(eq + 1)));
  }
  return out;
}

/// Applies `key=value` overrides on top of `base`.
inline void apply_overrides(ConfigMap& base, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not key=value");
    base[std::string(text::trim(std::string_view(a).substr(0, eq)))] =
        std::string(text::trim(std::string_view(a).substr(eq + 1)));
  }
}

enum class EncoderKind : std::uint8_t { kBaseline, kExternal };
enum class HeadKind : std::uint8_t { kMeanStd, kVlad };

struct RunConfig {
  // dataset
  std::filesystem::path clouds_dir;
  std::filesystem::path poses_file;
  std::filesystem::path sensor_file;
  std::filesystem::path output_dir = "polarscan_out";

  // preprocessing
  Aabb roi{};
  std::optional<double> ground_z;
  std::size_t curvature_k = kDefaultCurvatureK;
  NeighborSearch curvature_search = NeighborSearch::kAuto;

  ProjectionConfig projection = [] {
    ProjectionConfig p;
    p.out_height = 224;
    p.out_width = 224;
    return p;
  }();
  std::vector<std::string> png_channels;

  // encoder
  EncoderKind encoder = EncoderKind::kBaseline;
  std::size_t patch = kDefaultPatch;
  std::size_t c_out = kDefaultBaselineChannels;
  std::filesystem::path features_dir;     ///< EXTERNAL input (PFEA files)
  std::filesystem::path projections_dir;  ///< BASELINE input; default <output>/projections

  // head
  HeadKind head = HeadKind::kMeanStd;
  std::filesystem::path codebook_file;  ///< default <output>/codebook.pvld
  std::size_t vlad_k = 8;
  double vlad_alpha = kDefaultVladAlpha;
  std::uint64_t seed = 0;
  std::size_t codebook_sample = 20000;

  // evaluation
  RegimeConfig regime;
  GroundTruthConfig gt;
  std::filesystem::path descriptors_file;  ///< default <output>/descriptors.pdsc
  std::filesystem::path query_descriptors_file;
  std::filesystem::path query_poses_file;

  std::size_t jobs = 1;

  [[nodiscard]] std::filesystem::path projections_path() const {
    return projections_dir.empty() ? output_dir / "projections" : projections_dir;
  }
  [[nodiscard]] std::filesystem::path descriptors_path() const {
    return descriptors_file.empty() ? output_dir / "descriptors.pdsc" : descriptors_file;
  }
  [[nodiscard]] std::filesystem::path codebook_path() const {
    return codebook_file.empty() ? output_dir / "codebook.pvld" : codebook_file;
  }
};

namespace detail {

inline double config_double(const std::string& key, const std::string& v) {
  const auto d = text::to_double(v);
  if (!d || !std::isfinite(*d)) throw ConfigError("config '" + key + "': expected a number, got '" + v + "'");
  return *d;
}

inline std::size_t config_size(const std::string& key, const std::string& v) {
  const auto i = text::to_int(v);
  if (!i || *i < 0) throw ConfigError("config '" + key + "': expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(*i);
}

inline std::vector<double> config_doubles(const std::string& key, const std::string& v,
                                          std::size_t expected) {
  std::vector<double> out;
  for (auto item : text::split(v, ',')) out.push_back(config_double(key, std::string(text::trim(item))));
  if (out.size() != expected) {
    throw ConfigError("config '" + key + "': expected " + std::to_string(expected) + " comma-separated numbers");
  }
  return out;
}

inline std::vector<std::string> config_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto item : text::split(v, ',')) {
    const auto t = text::trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

}  // namespace detail

/// Builds a RunConfig from flattened keys; unknown keys are rejected.
inline RunConfig run_config_from_map(const ConfigMap& map) {
  using detail::config_double;
  using detail::config_size;
  RunConfig cfg;
  for (const auto& [key, value] : map) {
    if (key == "output") {
      cfg.output_dir = value;
    } else if (key == "jobs") {
      cfg.jobs = std::max<std::size_t>(1, config_size(key, value));
    } else if (key == "dataset.clouds") {
      cfg.clouds_dir = value;
    } else if (key == "dataset.poses") {
      cfg.poses_file = value;
    } else if (key == "dataset.sensor") {
      cfg.sensor_file = value;
    } else if (key == "filter.roi") {
      const auto v = detail::config_doubles(key, value, 6);
      cfg.roi.min = {v[0], v[1], v[2]};
      cfg.roi.max = {v[3], v[4], v[5]};
    } else if (key == "filter.ground_z") {
      if (text::lower(value) == "none" || value.empty()) {
        cfg.ground_z.reset();
      } else {
        cfg.ground_z = config_double(key, value);
      }
    } else if (key == "curvature.k") {
      cfg.curvature_k = config_size(key, value);
    } else if (key == "curvature.search") {
      const auto l = text::lower(value);
      if (l == "auto") cfg.curvature_search = NeighborSearch::kAuto;
      else if (l == "brute" || l == "brute_force") cfg.curvature_search = NeighborSearch::kBruteForce;
      else if (l == "grid") cfg.curvature_search = NeighborSearch::kGrid;
      else throw ConfigError("config '" + key + "': expected auto|brute|grid");
    } else if (key == "projection.kind") {
      cfg.projection.kind = parse_projection_kind(value);
    } else if (key == "projection.height") {
      cfg.projection.height = config_size(key, value);
    } else if (key == "projection.width") {
      cfg.projection.width = config_size(key, value);
    } else if (key == "projection.channels") {
      cfg.projection.channels.clear();
      try {
        for (const auto& c : detail::config_list(value)) cfg.projection.channels.push_back(parse_channel(c));
      } catch (const LookupError& e) {
        throw ConfigError(std::string("config 'projection.channels': ") + e.what());
      }
    } else if (key == "projection.max_range") {
      cfg.projection.max_range = config_double(key, value);
    } else if (key == "projection.fov") {
      const auto v = detail::config_doubles(key, value, 2);
      cfg.projection.fov_min = v[0];
      cfg.projection.fov_max = v[1];
    } else if (key == "projection.extent") {
      const auto l = text::lower(value);
      if (l == "per_frame") cfg.projection.extent_mode = ExtentMode::kPerFrame;
      else if (l == "fixed") cfg.projection.extent_mode = ExtentMode::kFixed;
      else throw ConfigError("config '" + key + "': expected per_frame|fixed");
    } else if (key == "projection.fixed") {
      const auto v = detail::config_doubles(key, value, 4);
      cfg.projection.fixed = {v[0], v[1], v[2], v[3]};
    } else if (key == "projection.output") {
      const auto l = text::lower(value);
      if (l == "native") {
        cfg.projection.out_height = cfg.projection.out_width = 0;
      } else {
        const auto x = l.find('x');
        if (x == std::string::npos) throw ConfigError("config '" + key + "': expected HxW or native");
        cfg.projection.out_height = config_size(key, l.substr(0, x));
        cfg.projection.out_width = config_size(key, l.substr(x + 1));
      }
    } else if (key == "projection.png") {
      cfg.png_channels = detail::config_list(value);
    } else if (key == "encoder.type") {
      const auto l = text::lower(value);
      if (l == "baseline") cfg.encoder = EncoderKind::kBaseline;
      else if (l == "external") cfg.encoder = EncoderKind::kExternal;
      else throw ConfigError("config '" + key + "': expected baseline|external");
    } else if (key == "encoder.patch") {
      cfg.patch = config_size(key, value);
    } else if (key == "encoder.channels") {
      cfg.c_out = config_size(key, value);
    } else if (key == "encoder.features") {
      cfg.features_dir = value;
    } else if (key == "encoder.projections") {
      cfg.projections_dir = value;
    } else if (key == "head.type") {
      const auto l = text::lower(value);
      if (l == "meanstd" || l == "mean_std" || l == "ms") cfg.head = HeadKind::kMeanStd;
      else if (l == "vlad" || l == "netvlad") cfg.head = HeadKind::kVlad;
      else throw ConfigError("config '" + key + "': expected meanstd|vlad");
    } else if (key == "head.codebook") {
      cfg.codebook_file = value;
    } else if (key == "head.k") {
      cfg.vlad_k = config_size(key, value);
    } else if (key == "head.alpha") {
      cfg.vlad_alpha = config_double(key, value);
    } else if (key == "head.seed") {
      cfg.seed = config_size(key, value);
    } else if (key == "head.sample") {
      cfg.codebook_sample = config_size(key, value);
    } else if (key == "regime.type") {
      cfg.regime.regime = parse_regime(value);
    } else if (key == "regime.split") {
      cfg.regime.split_index = config_size(key, value);
    } else if (key == "regime.offset") {
      cfg.regime.offset = config_size(key, value);
    } else if (key == "regime.window") {
      cfg.regime.window = config_size(key, value);
    } else if (key == "regime.lag") {
      cfg.regime.lag = config_size(key, value);
    } else if (key == "gt.tau") {
      cfg.gt.tau = config_double(key, value);
    } else if (key == "gt.delta_t") {
      cfg.gt.delta_t = config_double(key, value);
    } else if (key == "gt.unit") {
      const auto l = text::lower(value);
      if (l == "frames") cfg.gt.unit = TemporalUnit::kFrames;
      else if (l == "seconds") cfg.gt.unit = TemporalUnit::kSeconds;
      else throw ConfigError("config '" + key + "': expected frames|seconds");
    } else if (key == "eval.descriptors") {
      cfg.descriptors_file = value;
    } else if (key == "eval.query_descriptors") {
      cfg.query_descriptors_file = value;
    } else if (key == "eval.query_poses") {
      cfg.query_poses_file = value;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  cfg.projection.validate();
  cfg.gt.validate();
  if (cfg.curvature_k < 3) throw ConfigError("config 'curvature.k' must be >= 3");
  if (cfg.patch < 1) throw ConfigError("config 'encoder.patch' must be >= 1");
  if (cfg.head == HeadKind::kVlad && cfg.vlad_k < 1) throw ConfigError("config 'head.k' must be >= 1");
  if (cfg.head == HeadKind::kVlad && !(cfg.vlad_alpha > 0.0)) throw ConfigError("config 'head.alpha' must be > 0");
  if (cfg.encoder == EncoderKind::kBaseline &&
      cfg.c_out < kStatsPerChannel * cfg.projection.channels.size()) {
    throw ConfigError("config 'encoder.channels' must be >= 8 x number of projection channels");
  }
  for (const auto& ch : cfg.png_channels) {
    bool found = false;
    for (auto c : cfg.projection.channels) found = found || to_string(c) == ch;
    if (!found) throw ConfigError("png channel '" + ch + "' is not a projection channel");
  }
  return cfg;
}

}  // namespace polarscan

#endif  // POLARSCAN_CONFIG_HPP
