#ifndef POLARSCAN_RETRIEVAL_HPP
#define POLARSCAN_RETRIEVAL_HPP

/**
 * @file retrieval.hpp
 * @brief Exact L2 descriptor index, pose-derived ground truth, and the three
 *        evaluation regimes (intra-sequence, inter-sequence, time window).
 *
 * A database row j is a positive for query q when |p_q - p_j| < tau and the
 * temporal separation exceeds delta_t (seconds or frames). The intra regime
 * also requires a frame separation above its offset; the inter regime
 * applies no temporal rule because the sequences are different sessions.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polarscan/aggregation.hpp"
#include "polarscan/errors.hpp"
#include "polarscan/pointcloud.hpp"
#include "polarscan/text.hpp"

namespace polarscan {

using Position = std::array<double, 3>;

inline constexpr double kRowNormTolerance = 1e-4;

class DescriptorIndex {
 public:
  DescriptorIndex() = default;

  [[nodiscard]] std::size_t size() const { return frame_ids_.size(); }
  [[nodiscard]] bool empty() const { return frame_ids_.empty(); }
  [[nodiscard]] std::size_t dim() const { return dim_; }

  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return {matrix_.data() + i * dim_, dim_};
  }
  [[nodiscard]] std::uint64_t frame_id(std::size_t i) const { return frame_ids_[i]; }
  [[nodiscard]] double timestamp(std::size_t i) const { return timestamps_[i]; }
  [[nodiscard]] const Position& position(std::size_t i) const { return positions_[i]; }

  friend DescriptorIndex build_index(std::span<const GlobalDescriptor>, const PoseTrack&);

 private:
  std::size_t dim_ = 0;
  std::vector<double> matrix_;
  std::vector<std::uint64_t> frame_ids_;
  std::vector<double> timestamps_;
  std::vector<Position> positions_;
};

/// Rows in descriptor order, joined with poses by frame id.
inline DescriptorIndex build_index(std::span<const GlobalDescriptor> descs, const PoseTrack& poses) {
  DescriptorIndex idx;
  idx.dim_ = descs.empty() ? 0 : descs.front().dim();
  idx.matrix_.reserve(descs.size() * idx.dim_);
  for (const auto& d : descs) {
    if (d.dim() != idx.dim_) throw ShapeError("build_index: mixed descriptor dimensions");
    const PoseEntry* pose = poses.find(d.frame_id);
    if (!pose) {
      throw JoinError("build_index: no pose for frame " + std::to_string(d.frame_id));
    }
    if (d.normalized) {
      double n2 = 0.0;
      for (double v : d.values) n2 += v * v;
      if (std::abs(std::sqrt(n2) - 1.0) > kRowNormTolerance) {
        throw ValidationError("build_index: descriptor for frame " + std::to_string(d.frame_id) +
                              " is flagged normalized but is not unit length");
      }
    }
    idx.matrix_.insert(idx.matrix_.end(), d.values.begin(), d.values.end());
    idx.frame_ids_.push_back(d.frame_id);
    idx.timestamps_.push_back(pose->timestamp);
    idx.positions_.push_back(pose->position);
  }
  return idx;
}

/// Restricts a search to rows in [begin, end) that also pass `keep`.
struct RowMask {
  std::size_t begin = 0;
  std::size_t end = std::numeric_limits<std::size_t>::max();
  std::function<bool(std::size_t)> keep;

  [[nodiscard]] bool operator()(std::size_t row) const {
    return row >= begin && row < end && (!keep || keep(row));
  }
};

struct QueryResult {
  std::vector<std::size_t> ids;
  std::vector<double> distances;  ///< ascending
};

/// Exact k nearest rows by L2 distance; ties go to the lower row index.
inline QueryResult search_topk(const DescriptorIndex& index, std::span<const double> query,
                               std::size_t k, const RowMask& mask = {}) {
  if (k < 1) throw ConfigError("search_topk: k must be >= 1");
  if (!index.empty() && query.size() != index.dim()) {
    throw ShapeError("search_topk: query dimension " + std::to_string(query.size()) +
                     " != index dimension " + std::to_string(index.dim()));
  }
  struct Hit {
    double d2;
    std::size_t row;
    bool operator<(const Hit& o) const { return d2 != o.d2 ? d2 < o.d2 : row < o.row; }
  };
  std::vector<Hit> hits;
  const std::size_t end = std::min(mask.end, index.size());
  for (std::size_t i = mask.begin; i < end; ++i) {
    if (mask.keep && !mask.keep(i)) continue;
    hits.push_back({squared_distance(query, index.row(i)), i});
  }
  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end());
  QueryResult out;
  out.ids.reserve(take);
  out.distances.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.ids.push_back(hits[i].row);
    out.distances.push_back(std::sqrt(hits[i].d2));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

enum class TemporalUnit : std::uint8_t { kSeconds, kFrames };

struct GroundTruthConfig {
  double tau = 5.0;      ///< meters
  double delta_t = 0.0;  ///< minimum temporal separation, in `unit`
  TemporalUnit unit = TemporalUnit::kFrames;

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("ground truth: tau must be > 0");
    if (!(delta_t >= 0.0)) throw ConfigError("ground truth: delta_t must be >= 0");
  }
};

struct QueryMeta {
  std::uint64_t frame_id = 0;
  double timestamp = 0.0;
  Position position{};
};

inline double position_distance(const Position& a, const Position& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double frame_gap(std::uint64_t a, std::uint64_t b) {
  return static_cast<double>(a > b ? a - b : b - a);
}

namespace detail {

inline std::vector<std::size_t> positives(const DescriptorIndex& index, const QueryMeta& q,
                                          double tau, std::optional<double> delta_t,
                                          TemporalUnit unit, const RowMask& mask,
                                          std::optional<double> min_frame_gap) {
  std::vector<std::size_t> out;
  const std::size_t end = std::min(mask.end, index.size());
  for (std::size_t j = mask.begin; j < end; ++j) {
    if (mask.keep && !mask.keep(j)) continue;
    if (!(position_distance(q.position, index.position(j)) < tau)) continue;
    if (delta_t) {
      const double sep = unit == TemporalUnit::kSeconds
                             ? std::abs(q.timestamp - index.timestamp(j))
                             : frame_gap(q.frame_id, index.frame_id(j));
      if (!(sep > *delta_t)) continue;
    }
    if (min_frame_gap && !(frame_gap(q.frame_id, index.frame_id(j)) > *min_frame_gap)) continue;
    out.push_back(j);
  }
  return out;
}

}  // namespace detail

/// Rows within tau of the query position and separated by more than delta_t.
inline std::vector<std::size_t> compute_positives(const DescriptorIndex& index,
                                                  const QueryMeta& query,
                                                  const GroundTruthConfig& gt,
                                                  const RowMask& mask = {}) {
  gt.validate();
  return detail::positives(index, query, gt.tau, gt.delta_t, gt.unit, mask, std::nullopt);
}

// ---------------------------------------------------------------------------
// Regimes
// ---------------------------------------------------------------------------

enum class Regime : std::uint8_t { kIntra, kInter, kTimeWindow };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::kIntra: return "intra";
    case Regime::kInter: return "inter";
    case Regime::kTimeWindow: return "time_window";
  }
  return "?";
}

inline Regime parse_regime(std::string_view s) {
  const auto l = text::lower(s);
  if (l == "intra") return Regime::kIntra;
  if (l == "inter") return Regime::kInter;
  if (l == "time_window" || l == "time-window" || l == "window") return Regime::kTimeWindow;
  throw ConfigError("unknown regime '" + std::string(s) + "'");
}

inline constexpr std::size_t kDefaultIntraOffset = 200;

struct RegimeConfig {
  Regime regime = Regime::kIntra;
  std::optional<std::size_t> split_index;  ///< INTRA N_D; defaults to N / 2
  std::size_t offset = kDefaultIntraOffset;  ///< INTRA minimum frame separation
  std::size_t window = 100;                  ///< TIME_WINDOW w
  std::size_t lag = 10;                      ///< TIME_WINDOW delta

  /// Checks the invariants that depend on the sequence length n.
  void validate(std::size_t n) const {
    if (regime == Regime::kIntra) {
      const std::size_t nd = split_index.value_or(n / 2);
      if (!(nd > 0 && nd < n)) {
        throw ConfigError("intra regime: split index " + std::to_string(nd) +
                          " must satisfy 0 < N_D < N = " + std::to_string(n));
      }
    }
    if (regime == Regime::kTimeWindow && (window < 1 || lag < 1)) {
      throw ConfigError("time window regime: w and delta must be >= 1");
    }
  }
};

struct QueryRecord {
  std::uint64_t query_frame = 0;
  std::uint64_t top1_frame = 0;
  double distance = 0.0;
  bool is_positive = false;
  bool has_any_positive = false;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

/// Database rows searched by time-window query t: [t - w - delta, t - delta]
/// clipped at 0, or nullopt when t < delta.
inline std::optional<std::pair<std::size_t, std::size_t>> time_window_rows(std::size_t t,
                                                                           std::size_t w,
                                                                           std::size_t lag) {
  if (t < lag) return std::nullopt;
  const std::size_t last = t - lag;
  const std::size_t first = last >= w ? last - w : 0;
  return std::pair{first, last};
}

namespace detail {

inline QueryRecord evaluate_query(const DescriptorIndex& db, std::span<const double> query,
                                  const QueryMeta& meta, const RowMask& mask,
                                  const std::vector<std::size_t>& pos) {
  const auto hit = search_topk(db, query, 1, mask);
  QueryRecord rec;
  rec.query_frame = meta.frame_id;
  rec.top1_frame = db.frame_id(hit.ids.front());
  rec.distance = hit.distances.front();
  rec.has_any_positive = !pos.empty();
  rec.is_positive = std::binary_search(pos.begin(), pos.end(), hit.ids.front());
  return rec;
}

inline QueryMeta meta_of(const DescriptorIndex& idx, std::size_t row) {
  return {idx.frame_id(row), idx.timestamp(row), idx.position(row)};
}

}  // namespace detail

/// Runs INTRA or TIME_WINDOW over one sequence.
inline std::vector<QueryRecord> run_regime(const DescriptorIndex& seq, const RegimeConfig& cfg,
                                           const GroundTruthConfig& gt) {
  gt.validate();
  if (cfg.regime == Regime::kInter) {
    throw ConfigError("inter regime needs a separate query sequence; use run_inter");
  }
  const std::size_t n = seq.size();
  cfg.validate(n);
  std::vector<QueryRecord> records;

  if (cfg.regime == Regime::kIntra) {
    const std::size_t nd = cfg.split_index.value_or(n / 2);
    const RowMask db{0, nd, {}};
    for (std::size_t q = nd; q < n; ++q) {
      const auto meta = detail::meta_of(seq, q);
      const auto pos = detail::positives(seq, meta, gt.tau, gt.delta_t, gt.unit, db,
                                         static_cast<double>(cfg.offset));
      records.push_back(detail::evaluate_query(seq, seq.row(q), meta, db, pos));
    }
    return records;
  }

  for (std::size_t t = 0; t < n; ++t) {
    const auto rows = time_window_rows(t, cfg.window, cfg.lag);
    if (!rows) continue;
    const RowMask db{rows->first, rows->second + 1, {}};
    const auto meta = detail::meta_of(seq, t);
    const auto pos = detail::positives(seq, meta, gt.tau, gt.delta_t, gt.unit, db, std::nullopt);
    records.push_back(detail::evaluate_query(seq, seq.row(t), meta, db, pos));
  }
  return records;
}

/// Whole `database` sequence searched by every frame of `queries`.
inline std::vector<QueryRecord> run_inter(const DescriptorIndex& database,
                                          const DescriptorIndex& queries,
                                          const GroundTruthConfig& gt) {
  gt.validate();
  if (database.empty()) throw ConfigError("inter regime: empty database sequence");
  if (!queries.empty() && queries.dim() != database.dim()) {
    throw ShapeError("inter regime: database and query descriptor dimensions differ");
  }
  std::vector<QueryRecord> records;
  records.reserve(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto meta = detail::meta_of(queries, q);
    const auto pos = detail::positives(database, meta, gt.tau, std::nullopt, gt.unit, {}, std::nullopt);
    records.push_back(detail::evaluate_query(database, queries.row(q), meta, {}, pos));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Records CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kRecordsHeader =
    "query_frame,top1_frame,distance,is_positive,has_positive";

inline std::string records_to_csv(std::span<const QueryRecord> records) {
  std::string out(kRecordsHeader);
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.query_frame) + ',' + std::to_string(r.top1_frame) + ',' +
           text::format_double(r.distance) + ',' + (r.is_positive ? '1' : '0') + ',' +
           (r.has_any_positive ? '1' : '0') + '\n';
  }
  return out;
}

inline std::vector<QueryRecord> records_from_csv(std::string_view csv) {
  const auto rows = text::lines(csv);
  if (rows.empty() || text::trim(rows.front()) != kRecordsHeader) {
    throw FormatError("records csv: expected header '" + std::string(kRecordsHeader) + "'");
  }
  std::vector<QueryRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (text::trim(rows[i]).empty()) continue;
    const auto f = text::split(rows[i], ',');
    const std::string where = "records csv line " + std::to_string(i + 1);
    if (f.size() != 5) throw FormatError(where + ": expected 5 fields");
    const auto q = text::to_int(f[0]);
    const auto m = text::to_int(f[1]);
    const auto d = text::to_double(f[2]);
    const auto p = text::to_int(f[3]);
    const auto h = text::to_int(f[4]);
    if (!q || !m || !d || !p || !h || *q < 0 || *m < 0 || !(*d >= 0.0) || *p < 0 || *p > 1 ||
        *h < 0 || *h > 1) {
      throw ParseError(where + ": malformed field");
    }
    out.push_back({static_cast<std::uint64_t>(*q), static_cast<std::uint64_t>(*m), *d, *p == 1,
                   *h == 1});
  }
  return out;
}

}  // namespace polarscan

#endif  // POLARSCAN_RETRIEVAL_HPP
