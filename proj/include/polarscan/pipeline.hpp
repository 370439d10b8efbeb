#ifndef POLARSCAN_PIPELINE_HPP
#define POLARSCAN_PIPELINE_HPP

/**
 * @file pipeline.hpp
 * @brief Directory-level drivers behind the `polarscan` subcommands.
 *
 * Every command validates its configuration and inputs before creating or
 * writing anything under the output directory. Frame-level work runs on
 * `jobs` threads; files are written afterwards, in frame order, from the
 * calling thread.
 */

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "polarscan/aggregation.hpp"
#include "polarscan/binary_io.hpp"
#include "polarscan/config.hpp"
#include "polarscan/curvature.hpp"
#include "polarscan/features.hpp"
#include "polarscan/metrics.hpp"
#include "polarscan/png.hpp"
#include "polarscan/pointcloud.hpp"
#include "polarscan/projection.hpp"
#include "polarscan/retrieval.hpp"

namespace polarscan {

namespace fs = std::filesystem;

/// Runs body(i) for i in [0, n) on up to `jobs` threads. The first
/// exception is rethrown after all workers finish.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          const std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

/// Trailing digits of the file stem ("000042.bin", "frame_000042.pprj" -> 42).
inline std::optional<std::uint64_t> frame_id_from_path(const fs::path& p) {
  const std::string stem = p.stem().string();
  std::size_t b = stem.size();
  while (b > 0 && stem[b - 1] >= '0' && stem[b - 1] <= '9') --b;
  if (b == stem.size()) return std::nullopt;
  return std::stoull(stem.substr(b));
}

inline std::string frame_file_name(std::uint64_t frame_id, std::string_view ext) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "frame_%06llu", static_cast<unsigned long long>(frame_id));
  return std::string(buf) + std::string(ext);
}

struct FrameFile {
  fs::path path;
  std::uint64_t frame_id;
};

/// Files in `dir` with one of `extensions`, sorted by name; frame ids from
/// the names, or the sorted position when a name has no digits.
inline std::vector<FrameFile> list_frames(const fs::path& dir, std::initializer_list<std::string_view> extensions) {
  if (!fs::is_directory(dir)) throw ConfigError("directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = text::lower(e.path().extension().string());
    if (std::find(extensions.begin(), extensions.end(), ext) != extensions.end()) paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<FrameFile> out;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    out.push_back({paths[i], frame_id_from_path(paths[i]).value_or(i)});
  }
  for (std::size_t i = 1; i < out.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (out[i].frame_id == out[j].frame_id) {
        throw ConfigError("files '" + out[j].path.filename().string() + "' and '" +
                          out[i].path.filename().string() + "' map to the same frame id");
      }
    }
  }
  return out;
}

inline void require_file(const fs::path& p, std::string_view what) {
  if (p.empty()) throw ConfigError(std::string(what) + " is not set");
  if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " '" + p.string() + "' does not exist");
}

// ---------------------------------------------------------------------------
// project
// ---------------------------------------------------------------------------

/// Parses, filters, enriches and projects one scan.
inline ProjectionImage project_cloud(const PointCloud& raw, const SensorProfile& profile, const RunConfig& cfg) {
  PointCloud cloud = crop_filter(raw, cfg.roi, cfg.ground_z);
  if (cfg.projection.wants(Channel::kCurvature)) {
    cloud = estimate_curvature(cloud, cfg.curvature_k, cfg.curvature_search);
  }
  return project(cloud, profile, cfg.projection);
}

inline PointCloud load_cloud(const FrameFile& f) {
  const auto ext = text::lower(f.path.extension().string());
  if (ext == ".csv") return parse_csv(io::read_text_file(f.path), f.frame_id);
  return parse_kitti_bin(io::read_file(f.path), f.frame_id);
}

struct ProjectSummary {
  std::size_t written = 0;
  std::vector<std::string> failures;  ///< "file: message"
};

inline ProjectSummary cmd_project(const RunConfig& cfg) {
  require_file(cfg.sensor_file, "dataset.sensor");
  const auto frames = list_frames(cfg.clouds_dir, {".bin", ".csv"});
  if (frames.empty()) throw ConfigError("no .bin or .csv clouds in '" + cfg.clouds_dir.string() + "'");
  const SensorProfile profile = parse_sensor_profile(io::read_text_file(cfg.sensor_file));

  std::vector<std::optional<ProjectionImage>> images(frames.size());
  std::vector<std::string> errors(frames.size());
  parallel_for(frames.size(), cfg.jobs, [&](std::size_t i) {
    try {
      images[i] = project_cloud(load_cloud(frames[i]), profile, cfg);
    } catch (const std::exception& e) {
      errors[i] = frames[i].path.filename().string() + ": " + e.what();
    }
  });

  const fs::path out_dir = cfg.projections_path();
  fs::create_directories(out_dir);
  ProjectSummary summary;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!images[i]) {
      summary.failures.push_back(errors[i]);
      continue;
    }
    const auto& img = *images[i];
    io::write_file(out_dir / frame_file_name(img.frame_id, ".pprj"), save_pprj(img));
    for (const auto& ch : cfg.png_channels) {
      io::write_file(out_dir / frame_file_name(img.frame_id, "_" + ch + ".png"), render_png(img, ch));
    }
    ++summary.written;
  }
  return summary;
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

/// Deterministic subset of at most `limit` tokens (seeded partial shuffle).
inline std::vector<Token> sample_tokens(std::vector<Token> tokens, std::size_t limit, std::uint64_t seed) {
  if (tokens.size() <= limit) return tokens;
  std::mt19937_64 rng(seed ^ 0x5DEECE66DULL);
  for (std::size_t i = 0; i < limit; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (tokens.size() - i));
    std::swap(tokens[i], tokens[j]);
  }
  tokens.resize(limit);
  return tokens;
}

struct EncodeSummary {
  std::size_t frames = 0;
  std::size_t dim = 0;
  bool codebook_created = false;
};

inline EncodeSummary cmd_encode(const RunConfig& cfg) {
  std::vector<FrameFile> inputs;
  if (cfg.encoder == EncoderKind::kBaseline) {
    inputs = list_frames(cfg.projections_path(), {".pprj"});
  } else {
    if (cfg.features_dir.empty()) throw ConfigError("encoder.features is not set");
    inputs = list_frames(cfg.features_dir, {".pfea"});
  }
  if (inputs.empty()) throw ConfigError("no encoder inputs found");
  const bool have_codebook = cfg.head == HeadKind::kVlad && fs::is_regular_file(cfg.codebook_path());

  std::vector<FeatureMap> maps(inputs.size());
  parallel_for(inputs.size(), cfg.jobs, [&](std::size_t i) {
    const auto bytes = io::read_file(inputs[i].path);
    if (cfg.encoder == EncoderKind::kBaseline) {
      maps[i] = baseline_encode(load_pprj(bytes, inputs[i].frame_id), cfg.patch, cfg.c_out);
    } else {
      maps[i] = load_feature_map(bytes);
    }
  });
  for (const auto& m : maps) {
    if (m.c != maps.front().c) {
      throw ShapeError("encode: feature maps have mixed channel counts (" + std::to_string(maps.front().c) +
                       " vs " + std::to_string(m.c) + ")");
    }
  }

  EncodeSummary summary;
  std::optional<VladCodebook> codebook;
  if (cfg.head == HeadKind::kVlad) {
    if (have_codebook) {
      codebook = load_codebook(io::read_file(cfg.codebook_path()));
    } else {
      std::vector<Token> all;
      for (const auto& m : maps) {
        auto t = flatten_tokens(m);
        all.insert(all.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
      }
      const auto sample = sample_tokens(std::move(all), cfg.codebook_sample, cfg.seed);
      // Round-trip through the file representation so a later run that
      // loads the persisted codebook sees identical centers.
      codebook = load_codebook(save_codebook(init_codebook(sample, cfg.vlad_k, cfg.seed, cfg.vlad_alpha)));
      summary.codebook_created = true;
    }
  }

  std::vector<GlobalDescriptor> descs(maps.size());
  parallel_for(maps.size(), cfg.jobs, [&](std::size_t i) {
    descs[i] = l2_normalize(codebook ? vlad_aggregate(maps[i], *codebook) : mean_std_pool(maps[i]));
  });
  for (const auto& d : descs) {
    if (d.dim() != descs.front().dim()) throw ShapeError("encode: mixed descriptor dimensions");
  }

  const auto pdsc = save_descriptors(descs);
  fs::create_directories(cfg.descriptors_path().parent_path().empty() ? fs::path(".")
                                                                       : cfg.descriptors_path().parent_path());
  if (summary.codebook_created) {
    if (cfg.codebook_path().has_parent_path()) fs::create_directories(cfg.codebook_path().parent_path());
    io::write_file(cfg.codebook_path(), save_codebook(*codebook));
  }
  io::write_file(cfg.descriptors_path(), pdsc);
  summary.frames = descs.size();
  summary.dim = descs.front().dim();
  return summary;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOutcome {
  EvalReport report;
  std::vector<QueryRecord> records;
  std::string summary_line;
};

inline std::string summary_line(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << "R@1=" << r.recall_at_1 << " maxF1=" << r.max_f1
     << " AUC=" << r.pr_auc;
  return os.str();
}

inline nlohmann::ordered_json regime_json(const RunConfig& cfg, std::size_t n) {
  nlohmann::ordered_json j;
  j["regime"] = std::string(to_string(cfg.regime.regime));
  if (cfg.regime.regime == Regime::kIntra) {
    j["split_index"] = cfg.regime.split_index.value_or(n / 2);
    j["offset"] = cfg.regime.offset;
  } else if (cfg.regime.regime == Regime::kTimeWindow) {
    j["window"] = cfg.regime.window;
    j["lag"] = cfg.regime.lag;
  }
  j["tau"] = cfg.gt.tau;
  j["delta_t"] = cfg.gt.delta_t;
  j["delta_t_unit"] = cfg.gt.unit == TemporalUnit::kFrames ? "frames" : "seconds";
  return j;
}

inline EvalOutcome cmd_eval(const RunConfig& cfg) {
  require_file(cfg.descriptors_path(), "eval.descriptors");
  require_file(cfg.poses_file, "dataset.poses");
  const bool inter = cfg.regime.regime == Regime::kInter;
  if (inter) {
    require_file(cfg.query_descriptors_file, "eval.query_descriptors");
    require_file(cfg.query_poses_file, "eval.query_poses");
  }
  const auto descs = load_descriptors(io::read_file(cfg.descriptors_path()));
  const auto poses = load_poses(io::read_text_file(cfg.poses_file));
  const DescriptorIndex index = build_index(descs, poses);

  EvalOutcome out;
  if (inter) {
    const auto qdescs = load_descriptors(io::read_file(cfg.query_descriptors_file));
    const auto qposes = load_poses(io::read_text_file(cfg.query_poses_file));
    out.records = run_inter(index, build_index(qdescs, qposes), cfg.gt);
  } else {
    cfg.regime.validate(index.size());
    out.records = run_regime(index, cfg.regime, cfg.gt);
  }
  out.report = evaluate(out.records);
  out.summary_line = summary_line(out.report);

  auto json = to_json(out.report);
  json["config"] = regime_json(cfg, index.size());
  fs::create_directories(cfg.output_dir);
  io::write_text_file(cfg.output_dir / "report.json", json.dump(2) + "\n");
  io::write_text_file(cfg.output_dir / "records.csv", records_to_csv(out.records));
  io::write_text_file(cfg.output_dir / "pr_curve.csv", curve_to_csv(out.report.curve));
  return out;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportInputs {
  std::vector<fs::path> records_files;
  std::vector<std::string> names;  ///< optional, one per file
  fs::path poses_file;             ///< database poses (match positions)
  fs::path query_poses_file;       ///< query poses; defaults to poses_file
  fs::path output_dir = "polarscan_report";
};

struct ReportRow {
  std::string name;
  EvalReport report;
  std::size_t map_rows = 0;
};

inline std::string format_table(const std::vector<ReportRow>& rows) {
  std::size_t w = 3;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << "run" << "  " << std::right << std::setw(8) << "R@1"
     << std::setw(8) << "maxF1" << std::setw(8) << "AUC" << std::setw(10) << "queries" << "\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(w)) << r.name << "  " << std::right << std::setw(8)
       << r.report.recall_at_1 << std::setw(8) << r.report.max_f1 << std::setw(8) << r.report.pr_auc
       << std::setw(10) << r.report.n_queries_with_positives << "\n";
  }
  return os.str();
}

inline std::vector<ReportRow> cmd_report(const ReportInputs& in, std::string* table_out = nullptr) {
  if (in.records_files.empty()) throw ConfigError("report: at least one records file is required");
  if (!in.names.empty() && in.names.size() != in.records_files.size()) {
    throw ConfigError("report: --names must match the number of records files");
  }
  require_file(in.poses_file, "report poses");
  for (const auto& f : in.records_files) require_file(f, "records file");
  if (!in.query_poses_file.empty()) require_file(in.query_poses_file, "report query poses");

  const auto db_poses = load_poses(io::read_text_file(in.poses_file));
  const auto q_poses = in.query_poses_file.empty() ? db_poses : load_poses(io::read_text_file(in.query_poses_file));

  std::vector<ReportRow> rows;
  std::vector<std::string> maps;
  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < in.records_files.size(); ++i) {
    const auto& path = in.records_files[i];
    const auto records = records_from_csv(io::read_text_file(path));
    std::string name = !in.names.empty() ? in.names[i]
                       : path.stem() == "records" && path.has_parent_path() && !path.parent_path().filename().empty()
                           ? path.parent_path().filename().string()
                           : path.stem().string();
    if (const int n = seen[name]++; n > 0) name += "_" + std::to_string(n);

    std::string map = "qx,qy,mx,my,correct\n";
    std::size_t map_rows = 0;
    for (const auto& r : records) {
      if (!r.has_any_positive) continue;
      const PoseEntry* q = q_poses.find(r.query_frame);
      const PoseEntry* m = db_poses.find(r.top1_frame);
      if (!q || !m) {
        throw FormatError(path.string() + ": frame " + std::to_string(!q ? r.query_frame : r.top1_frame) +
                          " missing from poses");
      }
      map += text::format_double(q->position[0]) + ',' + text::format_double(q->position[1]) + ',' +
             text::format_double(m->position[0]) + ',' + text::format_double(m->position[1]) + ',' +
             (r.is_positive ? "1" : "0") + '\n';
      ++map_rows;
    }
    rows.push_back({name, evaluate(records), map_rows});
    maps.push_back(std::move(map));
  }

  std::string csv = "run,recall_at_1,max_f1,pr_auc,queries_with_positives\n";
  for (const auto& r : rows) {
    csv += r.name + ',' + text::format_double(r.report.recall_at_1) + ',' + text::format_double(r.report.max_f1) +
           ',' + text::format_double(r.report.pr_auc) + ',' + std::to_string(r.report.n_queries_with_positives) +
           '\n';
  }
  const std::string table = format_table(rows);
  fs::create_directories(in.output_dir);
  io::write_text_file(in.output_dir / "summary.csv", csv);
  io::write_text_file(in.output_dir / "summary.txt", table);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    io::write_text_file(in.output_dir / (rows[i].name + "_matches.csv"), maps[i]);
  }
  if (table_out) *table_out = table;
  return rows;
}

}  // namespace polarscan

#endif  // POLARSCAN_PIPELINE_HPP
