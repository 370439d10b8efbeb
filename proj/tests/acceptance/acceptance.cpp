// Acceptance suite: one PASS/FAIL line per criterion, each with a time limit.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "polarscan/polarscan.hpp"

using namespace polarscan;
namespace fs = std::filesystem;

namespace {

/// Collects the first few failure messages of a criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 5) messages_ << (failures_ > 1 ? "; " : "") << what;
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream os;
    os.precision(17);
    os << what << ": got " << got << ", want " << want << " +/- " << tol;
    expect(std::abs(got - want) <= tol, os.str());
  }
  [[nodiscard]] bool ok() const { return failures_ == 0; }
  [[nodiscard]] std::string message() const {
    return messages_.str() + (failures_ > 5 ? " (+" + std::to_string(failures_ - 5) + " more)" : "");
  }

 private:
  std::size_t failures_ = 0;
  std::ostringstream messages_;
};

struct Criterion {
  std::string name;
  double limit_s;
  std::function<void(Check&)> body;
};

SensorProfile three_beams() {
  SensorProfile p;
  p.beam_elevations_deg = {-10.0, 0.0, 10.0};
  p.max_range = 100.0;
  return p;
}

ProjectionConfig pcfg(ProjectionKind kind, std::size_t h, std::size_t w) {
  ProjectionConfig c;
  c.kind = kind;
  c.height = h;
  c.width = w;
  c.channels = {Channel::kHeight};
  return c;
}

using Pixel = std::pair<std::size_t, std::size_t>;

std::vector<Pixel> filled(const ProjectionImage& img) {
  std::vector<Pixel> out;
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      if (img.filled(r, c)) out.emplace_back(r, c);
    }
  }
  return out;
}

PointCloud cloud_of(std::vector<PointRecord> pts) {
  PointCloud c;
  c.points = std::move(pts);
  return c;
}

// --- projection ---------------------------------------------------------------

void projection_formulas(Check& ck) {
  const auto range = pcfg(ProjectionKind::kRange, 1, 64);
  ck.expect(filled(project(cloud_of({{1, 0, 0, 0, 0}}), three_beams(), range)) == std::vector<Pixel>{{1, 32}},
            "RANGE (1,0,0) -> v=1 u=32");
  ck.expect(filled(project(cloud_of({{0, 0, 1, 0, 0}}), three_beams(), range)) == std::vector<Pixel>{{2, 32}},
            "RANGE (0,0,1) -> v=2 u=32");
  ck.expect(filled(project(cloud_of({{0, 1, 1, 0, 0}}), three_beams(), range)) == std::vector<Pixel>{{2, 16}},
            "RANGE (0,1,1) -> v=2 u=16");

  const auto bev = project(cloud_of({{0, 0, 0, 0, 0}, {10, 0, 0, 0, 0}, {0, 5, 0, 0, 0}, {10, 5, 0, 0, 0}}),
                           three_beams(), pcfg(ProjectionKind::kBev, 4, 4));
  ck.expect(filled(bev) == std::vector<Pixel>{{0, 0}, {0, 3}, {3, 0}, {3, 3}}, "BEV corner mapping");

  const auto polar = detail::map_pixels(cloud_of({{0, -1, 0, 0, 0}, {1, 0, 0, 0, 0}, {1, 1, 0, 0, 0}}), three_beams(),
                                        pcfg(ProjectionKind::kPolar, 3, 4), 3, 4);
  ck.expect(polar.size() == 3, "POLAR deposits all three points");
  if (polar.size() == 3) {
    ck.expect(polar[0].row == 1 && polar[0].col == 0, "POLAR (0,-1) -> v=1 u=0");
    ck.expect(polar[1].row == 1 && polar[1].col == 2, "POLAR (1,0) -> v=1 u=2");
    ck.expect(polar[2].row == 2 && polar[2].col == 3, "POLAR (1,1) -> v=2 u=3");
  }

  auto front = pcfg(ProjectionKind::kFront, 1, 8);
  front.fov_min = -std::numbers::pi / 4;
  front.fov_max = std::numbers::pi / 4;
  ck.expect(front_column(0.0, front.fov_min, front.fov_max, 8) == 4, "FRONT theta=0 -> u=4");
  ck.expect(front_column(std::numbers::pi / 4, front.fov_min, front.fov_max, 8) == 7, "FRONT theta=pi/4 -> u=7");
  ck.expect(filled(project(cloud_of({{1, 0, 0, 0, 0}, {1, 1, 0, 0, 0}}), three_beams(), front)) ==
                std::vector<Pixel>{{1, 4}, {1, 7}},
            "FRONT image pixels");
}

void polar_shift(Check& ck) {
  const std::size_t w = 360, h = 8;
  const double bin = 2 * std::numbers::pi / static_cast<double>(w);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> radius(0.5, 19.5), z(-2, 3), inten(0, 1);
  std::vector<double> r(w), zz(w), ii(w);
  for (std::size_t j = 0; j < w; ++j) {
    r[j] = radius(rng);
    zz[j] = z(rng);
    ii[j] = inten(rng);
  }
  auto ring = [&](std::size_t shift) {
    PointCloud c;
    for (std::size_t j = 0; j < w; ++j) {
      const double theta = -std::numbers::pi + (static_cast<double>((j + shift) % w) + 0.5) * bin;
      c.points.push_back({r[j] * std::cos(theta), r[j] * std::sin(theta), zz[j], ii[j], 0});
    }
    return c;
  };
  auto cfg = pcfg(ProjectionKind::kPolar, h, w);
  cfg.channels = {Channel::kHeight, Channel::kRange, Channel::kIntensity};
  cfg.extent_mode = ExtentMode::kFixed;
  cfg.fixed = {0.0, 20.0, -std::numbers::pi, std::numbers::pi};
  cfg.max_range = 25.0;
  const auto base = project(ring(0), three_beams(), cfg);
  ck.expect(filled(base).size() == w, "base ring fills one pixel per column");
  for (std::size_t m : {1u, 7u, 180u}) {
    const auto rot = project(ring(m), three_beams(), cfg);
    bool same = true;
    for (std::size_t row = 0; row < h; ++row) {
      for (std::size_t col = 0; col < w; ++col) {
        const std::size_t src = (col + w - m) % w;
        same = same && rot.filled(row, col) == base.filled(row, src);
        for (std::size_t ch = 0; ch < 3; ++ch) same = same && rot.at(row, col, ch) == base.at(row, src, ch);
      }
    }
    ck.expect(same, "shift by " + std::to_string(m) + " columns is not bit-exact");
  }
}

// --- curvature ----------------------------------------------------------------

void curvature_analytics(Check& ck) {
  PointCloud plane;
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) plane.points.push_back({double(x), double(y), 0, 0, 0});
  }
  ck.near(estimate_raw_curvature(plane, 8)[4], 0.0, 1e-12, "plane centre");

  PointCloud corner;
  corner.points.push_back({0, 0, 0, 0, 0});
  for (double x : {-0.5, 0.5}) {
    for (double y : {-0.5, 0.5}) {
      for (double z : {-0.5, 0.5}) corner.points.push_back({x, y, z, 0, 0});
    }
  }
  ck.near(estimate_raw_curvature(corner, 8)[0], 1.0 / 3.0, 1e-9, "cube corner");

  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-5, 5);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i) cloud.points.push_back({u(rng), u(rng), u(rng), 0, 0});
  const auto base = estimate_raw_curvature(cloud, 10);
  for (std::size_t i = 0; i < base.size(); i += 25) {
    ck.near(base[i], oracle::raw_curvature(cloud.points, i, 10), 1e-10, "oracle point " + std::to_string(i));
  }
  const double yaw = 0.3, pitch = -1.1, roll = 2.0;
  const double cy = std::cos(yaw), sy = std::sin(yaw), cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  const double m[3][3] = {{cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr},
                          {sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr},
                          {-sp, cp * sr, cp * cr}};
  PointCloud rot = cloud;
  for (auto& p : rot.points) {
    const double x = p.x, y = p.y, z = p.z;
    p.x = m[0][0] * x + m[0][1] * y + m[0][2] * z;
    p.y = m[1][0] * x + m[1][1] * y + m[1][2] * z;
    p.z = m[2][0] * x + m[2][1] * y + m[2][2] * z;
  }
  const auto turned = estimate_raw_curvature(rot, 10);
  double worst = 0;
  for (std::size_t i = 0; i < base.size(); ++i) worst = std::max(worst, std::abs(turned[i] - base[i]));
  ck.near(worst, 0.0, 1e-9, "rotation invariance, max deviation");
}

// --- aggregation --------------------------------------------------------------

void aggregation_oracles(Check& ck) {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> dc(1, 8), dhw(1, 32);
  double worst_ms = 0, worst_vlad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto fm = oracle::random_map(rng, dc(rng), dhw(rng), dhw(rng), -3, 3);
    const auto g = mean_std_pool(fm);
    const auto ref = oracle::mean_std(fm);
    for (std::size_t i = 0; i < ref.size(); ++i) worst_ms = std::max(worst_ms, std::abs(g.values[i] - ref[i]));

    const std::size_t k = 1 + trial % 8;
    std::uniform_real_distribution<double> u(-1, 1);
    VladCodebook cb;
    cb.k = k;
    cb.c = fm.c;
    cb.alpha = 0.5 + trial % 5;
    cb.centers.resize(k * fm.c);
    for (auto& v : cb.centers) v = u(rng);
    const auto vg = vlad_aggregate(fm, cb);
    const auto vref = oracle::vlad(fm, cb.centers, k, cb.alpha);
    for (std::size_t i = 0; i < vref.size(); ++i) worst_vlad = std::max(worst_vlad, std::abs(vg.values[i] - vref[i]));
  }
  ck.near(worst_ms, 0.0, 1e-12, "mean/std vs two-pass oracle, max deviation");
  ck.near(worst_vlad, 0.0, 1e-9, "VLAD vs scalar oracle, max deviation");

  const auto fm = oracle::random_map(rng, 4, 6, 5);
  VladCodebook one;
  one.k = 1;
  one.c = 4;
  one.centers.assign(4, 0.0);
  const auto tokens = flatten_tokens(fm);
  for (const auto& t : tokens) {
    for (std::size_t i = 0; i < 4; ++i) one.centers[i] += t[i] / static_cast<double>(tokens.size());
  }
  const auto zero = vlad_aggregate(fm, one);
  ck.expect(zero.values == std::vector<double>(4, 0.0), "K=1 with mean centre is not the zero vector");
  ck.expect(!l2_normalize(zero).normalized, "zero vector flagged as normalized");
}

// --- retrieval ----------------------------------------------------------------

void retrieval_oracle(Check& ck) {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> g(0, 1);
  auto random_desc = [&](std::uint64_t id, std::size_t dim) {
    GlobalDescriptor d;
    d.frame_id = id;
    d.values.resize(dim);
    for (auto& v : d.values) v = g(rng);
    return l2_normalize(d);
  };
  std::vector<PoseEntry> line;
  for (std::size_t i = 0; i < 500; ++i) line.push_back({i, 0.1 * i, {double(i), 0, 0}});
  const PoseTrack track(line);

  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GlobalDescriptor> descs;
    std::vector<std::vector<double>> db;
    for (std::size_t i = 0; i < 50; ++i) {
      descs.push_back(random_desc(i, 8));
      db.push_back(descs.back().values);
    }
    const auto idx = build_index(descs, track);
    const auto q = random_desc(0, 8).values;
    const auto ref = oracle::full_sort(db, q);
    for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{50}}) {
      const auto r = search_topk(idx, q, k);
      bool same = r.ids.size() == k;
      for (std::size_t i = 0; same && i < k; ++i) {
        same = r.ids[i] == ref[i].second && std::abs(r.distances[i] - ref[i].first) <= 1e-12;
      }
      mismatches += same ? 0 : 1;
    }
  }
  ck.expect(mismatches == 0, std::to_string(mismatches) + " top-k results differ from the full sort");

  // 500-frame loop through the time-window regime.
  std::vector<GlobalDescriptor> seq;
  std::vector<PoseEntry> loop;
  for (std::size_t i = 0; i < 500; ++i) {
    seq.push_back(random_desc(i, 6));
    const double a = 2 * std::numbers::pi * static_cast<double>(i % 120) / 120.0;
    loop.push_back({i, 0.1 * i, {20 * std::cos(a), 20 * std::sin(a), 0}});
  }
  RegimeConfig cfg;
  cfg.regime = Regime::kTimeWindow;
  cfg.window = 100;
  cfg.lag = 10;
  const auto records = run_regime(build_index(seq, PoseTrack(loop)), cfg, {5.0, 0.0, TemporalUnit::kFrames});
  ck.expect(records.size() == 490, "time window should score t = 10..499");
  std::size_t leaks = 0;
  for (const auto& r : records) {
    if (r.top1_frame + cfg.lag > r.query_frame || r.top1_frame + cfg.lag + cfg.window < r.query_frame) ++leaks;
  }
  for (std::size_t t = 0; t < 500; ++t) {
    const auto rows = time_window_rows(t, cfg.window, cfg.lag);
    if (rows && rows->second + cfg.lag > t) ++leaks;
    if (!rows && t >= cfg.lag) ++leaks;
  }
  ck.expect(leaks == 0, std::to_string(leaks) + " time-window leaks");
}

// --- metrics ------------------------------------------------------------------

void metrics_oracle(Check& ck) {
  const std::vector<double> d = {0.1, 0.2, 0.3, 0.4};
  const std::vector<int> l = {1, 1, 0, 1};
  const auto c = pr_curve(d, l);
  ck.expect(max_f1(c) == 6.0 / 7.0, "max-F1 of the four-record example is not exactly 6/7");

  std::mt19937_64 rng(303);
  std::size_t mismatches = 0, non_monotone = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 200;
    std::uniform_int_distribution<int> coarse(0, 15), label(0, 1);
    std::uniform_real_distribution<double> fine(0, 2);
    std::vector<double> dd(n);
    std::vector<int> ll(n);
    for (std::size_t i = 0; i < n; ++i) {
      dd[i] = trial % 2 ? coarse(rng) * 0.125 : fine(rng);
      ll[i] = label(rng);
    }
    if (std::count(ll.begin(), ll.end(), 1) == 0) ll[0] = 1;
    const auto curve = pr_curve(dd, ll);
    const auto ref = oracle::pr_points(dd, ll);
    bool same = curve.points.size() == ref.size();
    for (std::size_t i = 0; same && i < ref.size(); ++i) {
      const auto& p = curve.points[i];
      same = p.threshold == ref[i].threshold && p.tp == ref[i].tp && p.fp == ref[i].fp && p.fn == ref[i].fn;
    }
    mismatches += same ? 0 : 1;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      if (curve.points[i].recall < curve.points[i - 1].recall) ++non_monotone;
    }
  }
  ck.expect(mismatches == 0, std::to_string(mismatches) + " curves differ from the recount oracle");
  ck.expect(non_monotone == 0, std::to_string(non_monotone) + " recall decreases");
}

// --- end to end -----------------------------------------------------------------

const fs::path kWork = fs::temp_directory_path() / "polarscan_acceptance";

RunConfig loop_config(const fs::path& data, const fs::path& out) {
  RunConfig cfg = run_config_from_map({{"projection.kind", "bev"},
                                       {"projection.height", "64"},
                                       {"projection.width", "64"},
                                       {"projection.output", "128x128"},
                                       {"projection.channels", "height,intensity,range"},
                                       {"projection.max_range", "30"},
                                       {"encoder.type", "baseline"},
                                       {"encoder.patch", "16"},
                                       {"encoder.channels", "64"},
                                       {"head.type", "meanstd"},
                                       {"regime.type", "intra"},
                                       {"regime.offset", "200"},
                                       {"gt.tau", "5"}});
  cfg.clouds_dir = data / "clouds";
  cfg.poses_file = data / "poses.csv";
  cfg.sensor_file = data / "sensor.profile";
  cfg.output_dir = out;
  cfg.jobs = 1;
  return cfg;
}

EvalOutcome run_loop(const RunConfig& cfg) {
  const auto p = cmd_project(cfg);
  if (!p.failures.empty()) throw DegenerateInputError("projection failed: " + p.failures.front());
  cmd_encode(cfg);
  return cmd_eval(cfg);
}

void end_to_end(Check& ck) {
  fs::remove_all(kWork);
  const synthetic::LoopSpec spec;  // 400 frames, two passes over one scene
  ck.expect(spec.frames == 400, "loop length");
  synthetic::write_dataset(kWork / "data", spec);
  const auto out = run_loop(loop_config(kWork / "data", kWork / "run1"));
  std::printf("      %s, %zu queries with positives\n", out.summary_line.c_str(),
              out.report.n_queries_with_positives);
  ck.expect(out.report.n_queries_with_positives > 0, "no query has a positive");
  ck.expect(out.report.recall_at_1 >= 0.95, "R@1 = " + std::to_string(out.report.recall_at_1) + " < 0.95");
}

void determinism(Check& ck) {
  if (!fs::is_directory(kWork / "data")) synthetic::write_dataset(kWork / "data", synthetic::LoopSpec{});
  if (!fs::is_regular_file(kWork / "run1" / "report.json")) run_loop(loop_config(kWork / "data", kWork / "run1"));
  run_loop(loop_config(kWork / "data", kWork / "run2"));
  for (const char* f : {"descriptors.pdsc", "report.json"}) {
    ck.expect(io::read_file(kWork / "run1" / f) == io::read_file(kWork / "run2" / f),
              std::string(f) + " differs between runs");
  }
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"projection formula suite", 1.0, projection_formulas},
      {"polar circular-shift equivariance", 1.0, polar_shift},
      {"curvature analytics", 5.0, curvature_analytics},
      {"aggregation oracles", 10.0, aggregation_oracles},
      {"retrieval oracle", 10.0, retrieval_oracle},
      {"metrics oracle", 10.0, metrics_oracle},
      {"end-to-end synthetic loop", 60.0, end_to_end},
      {"determinism", 120.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Check ck;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(ck);
    } catch (const std::exception& e) {
      ck.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ck.expect(secs < c.limit_s, "took " + std::to_string(secs) + " s");
    std::printf("%s  %-36s %7.3f s (limit %g s)%s%s\n", ck.ok() ? "PASS" : "FAIL", c.name.c_str(), secs, c.limit_s,
                ck.ok() ? "" : "  ", ck.message().c_str());
    std::fflush(stdout);
    failed += ck.ok() ? 0 : 1;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
