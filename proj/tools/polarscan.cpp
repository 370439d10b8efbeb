// polarscan: project | encode | eval | report | synth

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polarscan/polarscan.hpp"

namespace {

namespace ps = polarscan;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Flags that map one-to-one onto config keys.
struct KeyFlag {
  const char* flag;
  const char* key;
  const char* help;
};

const std::vector<KeyFlag> kDatasetFlags = {
    {"--clouds", "dataset.clouds", "directory of .bin/.csv scans"},
    {"--poses", "dataset.poses", "poses CSV (frame,timestamp,x,y,z)"},
    {"--sensor", "dataset.sensor", "sensor profile"},
    {"--output,-o", "output", "output directory"},
};

const std::vector<KeyFlag> kProjectFlags = {
    {"--kind", "projection.kind", "bev|polar|range|front"},
    {"--height", "projection.height", "native rows (bev/polar)"},
    {"--width", "projection.width", "native columns"},
    {"--channels", "projection.channels", "comma list of height,range,intensity,curvature"},
    {"--max-range", "projection.max_range", "range channel normalizer, meters"},
    {"--fov", "projection.fov", "front view azimuth interval a_min,a_max (radians)"},
    {"--extent", "projection.extent", "per_frame|fixed"},
    {"--fixed", "projection.fixed", "fixed extent a_min,a_max,b_min,b_max"},
    {"--out-size", "projection.output", "HxW or native"},
    {"--png", "projection.png", "channels to also write as PNG"},
    {"--roi", "filter.roi", "crop box xmin,ymin,zmin,xmax,ymax,zmax"},
    {"--ground-z", "filter.ground_z", "drop points with z <= value"},
    {"--curvature-k", "curvature.k", "neighbors per curvature estimate"},
    {"--knn", "curvature.search", "auto|brute|grid"},
};

const std::vector<KeyFlag> kEncodeFlags = {
    {"--encoder", "encoder.type", "baseline|external"},
    {"--patch", "encoder.patch", "baseline patch size"},
    {"--c-out", "encoder.channels", "baseline output channels"},
    {"--features", "encoder.features", "directory of PFEA files (external encoder)"},
    {"--projections", "encoder.projections", "directory of PPRJ files"},
    {"--head", "head.type", "meanstd|vlad"},
    {"--codebook", "head.codebook", "VLAD codebook file"},
    {"--K", "head.k", "VLAD clusters"},
    {"--alpha", "head.alpha", "VLAD soft-assignment sharpness"},
    {"--seed", "head.seed", "codebook seed"},
    {"--sample", "head.sample", "max tokens sampled for the codebook"},
    {"--descriptors", "eval.descriptors", "descriptor file"},
};

const std::vector<KeyFlag> kEvalFlags = {
    {"--regime", "regime.type", "intra|inter|time_window"},
    {"--split", "regime.split", "INTRA database size"},
    {"--offset", "regime.offset", "INTRA minimum frame gap"},
    {"--w", "regime.window", "TIME_WINDOW window length"},
    {"--delta", "regime.lag", "TIME_WINDOW lag"},
    {"--tau", "gt.tau", "positive distance threshold, meters"},
    {"--delta-t", "gt.delta_t", "minimum temporal separation"},
    {"--unit", "gt.unit", "frames|seconds"},
    {"--descriptors", "eval.descriptors", "descriptor file"},
    {"--query-descriptors", "eval.query_descriptors", "INTER query descriptors"},
    {"--query-poses", "eval.query_poses", "INTER query poses"},
};

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::map<std::string, std::string> flag_values;  // key -> value
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, const std::vector<std::vector<KeyFlag>>& groups) {
  cmd->add_option("--config,-c", args.config_file, "key = value configuration file");
  cmd->add_option("--set", args.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--jobs,-j", args.jobs, "worker threads (default POLARSCAN_JOBS or 1)");
  for (const auto& group : groups) {
    for (const auto& f : group) {
      const std::string name = CLI::detail::split(f.flag, ',').front();
      if (cmd->get_option_no_throw(name) != nullptr) continue;
      cmd->add_option_function<std::string>(
          f.flag, [&args, key = std::string(f.key)](const std::string& v) { args.flag_values[key] = v; }, f.help);
    }
  }
}

ps::RunConfig resolve_config(const CommonArgs& args) {
  ps::ConfigMap map;
  if (!args.config_file.empty()) {
    map = ps::parse_config_text(ps::io::read_text_file(args.config_file));
  }
  for (const auto& [k, v] : args.flag_values) map[k] = v;
  ps::apply_overrides(map, args.overrides);
  if (args.jobs > 0) {
    map["jobs"] = std::to_string(args.jobs);
  } else if (!map.contains("jobs")) {
    if (const char* env = std::getenv("POLARSCAN_JOBS"); env != nullptr && *env != '\0') map["jobs"] = env;
  }
  return ps::run_config_from_map(map);
}

int classify(const std::exception& e) {
  if (dynamic_cast<const ps::ConfigError*>(&e) || dynamic_cast<const ps::FormatError*>(&e) ||
      dynamic_cast<const ps::ParseError*>(&e) || dynamic_cast<const ps::LookupError*>(&e) ||
      dynamic_cast<const ps::ValidationError*>(&e) || dynamic_cast<const ps::JoinError*>(&e)) {
    return kExitUsage;
  }
  return kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR place recognition from 2-D scan projections", "polarscan"};
  app.require_subcommand(1);

  CommonArgs project_args, encode_args, eval_args;
  auto* project_cmd = app.add_subcommand("project", "write PPRJ projections (and PNGs) for every scan");
  add_common(project_cmd, project_args, {kDatasetFlags, kProjectFlags});
  auto* encode_cmd = app.add_subcommand("encode", "encode projections or feature maps into descriptors");
  add_common(encode_cmd, encode_args, {kDatasetFlags, kProjectFlags, kEncodeFlags});
  auto* eval_cmd = app.add_subcommand("eval", "retrieve, score and write report.json / records.csv / pr_curve.csv");
  add_common(eval_cmd, eval_args, {kDatasetFlags, kEvalFlags});

  ps::ReportInputs report_in;
  std::vector<std::string> report_files;
  auto* report_cmd = app.add_subcommand("report", "compare records files and write match maps");
  report_cmd->add_option("records", report_files, "records.csv files")->required();
  report_cmd->add_option("--poses", report_in.poses_file, "database poses")->required();
  report_cmd->add_option("--query-poses", report_in.query_poses_file, "query poses (default: --poses)");
  report_cmd->add_option("--names", report_in.names, "run names, one per records file");
  report_cmd->add_option("--output,-o", report_in.output_dir, "output directory");

  ps::synthetic::LoopSpec synth;
  std::string synth_dir;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic loop dataset");
  synth_cmd->add_option("dir", synth_dir, "output directory")->required();
  synth_cmd->add_option("--frames", synth.frames, "number of scans");
  synth_cmd->add_option("--frames-per-lap", synth.frames_per_lap, "scans per loop");
  synth_cmd->add_option("--seed", synth.seed, "scene and noise seed");
  synth_cmd->add_option("--noise", synth.noise_sigma, "per-point noise, meters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*project_cmd) {
      const auto cfg = resolve_config(project_args);
      const auto summary = ps::cmd_project(cfg);
      for (const auto& f : summary.failures) std::cerr << "polarscan project: " << f << "\n";
      std::cout << "projected " << summary.written << " frame(s) into " << cfg.projections_path().string() << "\n";
      return summary.failures.empty() ? kExitOk : kExitRuntime;
    }
    if (*encode_cmd) {
      const auto cfg = resolve_config(encode_args);
      const auto summary = ps::cmd_encode(cfg);
      if (summary.codebook_created) std::cout << "wrote codebook " << cfg.codebook_path().string() << "\n";
      std::cout << "encoded " << summary.frames << " frame(s), L=" << summary.dim << " -> "
                << cfg.descriptors_path().string() << "\n";
      return kExitOk;
    }
    if (*eval_cmd) {
      const auto cfg = resolve_config(eval_args);
      const auto out = ps::cmd_eval(cfg);
      for (const auto& w : out.report.warnings) std::cerr << "polarscan eval: warning: " << w << "\n";
      std::cout << out.summary_line << "\n";
      return kExitOk;
    }
    if (*report_cmd) {
      for (const auto& f : report_files) report_in.records_files.emplace_back(f);
      std::string table;
      ps::cmd_report(report_in, &table);
      std::cout << table;
      return kExitOk;
    }
    if (*synth_cmd) {
      if (synth.frames == 0 || synth.frames_per_lap == 0) throw ps::ConfigError("synth: frame counts must be > 0");
      ps::synthetic::write_dataset(synth_dir, synth);
      std::cout << "wrote " << synth.frames << " scans to " << synth_dir << "\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "polarscan: error: " << e.what() << "\n";
    return classify(e);
  }
  return kExitUsage;
}
