#ifndef POLARSCAN_CURVATURE_HPP
#define POLARSCAN_CURVATURE_HPP

/**
 * @file curvature.hpp
 * @brief Per-point surface variation from K-nearest-neighbour covariance.
 *
 * kappa_i = lambda_min / (lambda_1 + lambda_2 + lambda_3) of the covariance of
 * the K nearest neighbours of p_i (self excluded). The raw value lies in
 * [0, 1/3]: 0 on planes, 1/3 for an isotropic neighbourhood. Projections
 * consume the per-frame min-max normalized value.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "polarscan/errors.hpp"
#include "polarscan/pointcloud.hpp"

namespace polarscan {

enum class NeighborSearch {
  kAuto,        ///< brute force below kGridThreshold points, grid hash above
  kBruteForce,  ///< O(N^2) exhaustive scan
  kGrid,        ///< exact search over a uniform voxel hash
};

inline constexpr std::size_t kGridThreshold = 20000;
inline constexpr std::size_t kDefaultCurvatureK = 10;

namespace detail {

struct Neighbor {
  double dist2;
  std::uint32_t index;
  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
  }
};

inline double dist2(const PointRecord& a, const PointRecord& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

/// Bounded max-heap keeping the k best neighbours under (dist2, index).
class KBest {
 public:
  explicit KBest(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  void offer(Neighbor n) {
    if (heap_.size() < k_) {
      heap_.push_back(n);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (n < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = n;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }
  [[nodiscard]] bool full() const { return heap_.size() == k_; }
  [[nodiscard]] double worst() const { return heap_.front().dist2; }

  std::vector<Neighbor> sorted() && {
    std::sort_heap(heap_.begin(), heap_.end());
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Neighbor> heap_;
};

class BruteForceKnn {
 public:
  explicit BruteForceKnn(std::span<const PointRecord> pts) : pts_(pts) {}

  std::vector<Neighbor> query(std::size_t self, std::size_t k) const {
    KBest best(k);
    for (std::size_t j = 0; j < pts_.size(); ++j) {
      if (j == self) continue;
      best.offer({dist2(pts_[self], pts_[j]), static_cast<std::uint32_t>(j)});
    }
    return std::move(best).sorted();
  }

 private:
  std::span<const PointRecord> pts_;
};

/// Exact kNN over a voxel hash: expands Chebyshev rings of cells until no
/// unvisited cell can hold a point closer than the current k-th best.
class GridKnn {
 public:
  GridKnn(std::span<const PointRecord> pts, std::size_t k) : pts_(pts) {
    double lo[3] = {std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
                    std::numeric_limits<double>::max()};
    double hi[3] = {std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest(),
                    std::numeric_limits<double>::lowest()};
    for (const auto& p : pts) {
      const double c[3] = {p.x, p.y, p.z};
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], c[a]);
        hi[a] = std::max(hi[a], c[a]);
      }
    }
    double volume = 1.0;
    int live_axes = 0;
    for (int a = 0; a < 3; ++a) {
      origin_[a] = lo[a];
      const double ext = hi[a] - lo[a];
      if (ext > 0.0) {
        volume *= ext;
        ++live_axes;
      }
    }
    // Aim for roughly k points per occupied cell.
    const double per_cell = static_cast<double>(std::max<std::size_t>(k, 1));
    const double n = static_cast<double>(std::max<std::size_t>(pts.size(), 1));
    cell_ = live_axes == 0 ? 1.0 : std::pow(volume * per_cell / n, 1.0 / live_axes);
    if (!(cell_ > 0.0) || !std::isfinite(cell_)) cell_ = 1.0;
    for (int a = 0; a < 3; ++a) {
      extent_cells_[a] = static_cast<std::int64_t>(std::floor((hi[a] - lo[a]) / cell_)) + 1;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cells_[key(cell_of(pts[i]))].push_back(static_cast<std::uint32_t>(i));
    }
  }

  std::vector<Neighbor> query(std::size_t self, std::size_t k) const {
    const auto& q = pts_[self];
    const auto c = cell_of(q);
    const double qc[3] = {q.x, q.y, q.z};
    KBest best(k);
    const std::int64_t max_ring =
        std::max({extent_cells_[0], extent_cells_[1], extent_cells_[2]});
    for (std::int64_t r = 0; r <= max_ring; ++r) {
      visit_ring(c, r, [&](const std::vector<std::uint32_t>& bucket) {
        for (std::uint32_t j : bucket) {
          if (j == self) continue;
          best.offer({dist2(q, pts_[j]), j});
        }
      });
      if (best.full()) {
        // Distance from q to the boundary of the visited (2r+1)^3 block.
        double margin = std::numeric_limits<double>::max();
        for (int a = 0; a < 3; ++a) {
          const double lo = origin_[a] + static_cast<double>(c[a] - r) * cell_;
          const double hi = origin_[a] + static_cast<double>(c[a] + r + 1) * cell_;
          margin = std::min({margin, qc[a] - lo, hi - qc[a]});
        }
        if (best.worst() < margin * margin) break;
      }
    }
    return std::move(best).sorted();
  }

 private:
  using Cell = std::array<std::int64_t, 3>;

  Cell cell_of(const PointRecord& p) const {
    return {static_cast<std::int64_t>(std::floor((p.x - origin_[0]) / cell_)),
            static_cast<std::int64_t>(std::floor((p.y - origin_[1]) / cell_)),
            static_cast<std::int64_t>(std::floor((p.z - origin_[2]) / cell_))};
  }

  static std::uint64_t key(const Cell& c) {
    // 21 bits per axis, offset so small negatives stay distinct.
    constexpr std::int64_t kBias = 1 << 20;
    constexpr std::uint64_t kMask = (1ULL << 21) - 1;
    return (static_cast<std::uint64_t>(c[0] + kBias) & kMask) |
           ((static_cast<std::uint64_t>(c[1] + kBias) & kMask) << 21) |
           ((static_cast<std::uint64_t>(c[2] + kBias) & kMask) << 42);
  }

  template <typename F>
  void visit_ring(const Cell& c, std::int64_t r, F&& f) const {
    for (std::int64_t dx = -r; dx <= r; ++dx) {
      for (std::int64_t dy = -r; dy <= r; ++dy) {
        const bool edge_xy = std::abs(dx) == r || std::abs(dy) == r;
        for (std::int64_t dz = -r; dz <= r; ++dz) {
          if (!edge_xy && std::abs(dz) != r) {
            dz = r - 1;  // jump to the far face
            continue;
          }
          const Cell n = {c[0] + dx, c[1] + dy, c[2] + dz};
          if (n[0] < 0 || n[1] < 0 || n[2] < 0 || n[0] >= extent_cells_[0] ||
              n[1] >= extent_cells_[1] || n[2] >= extent_cells_[2]) {
            continue;
          }
          if (const auto it = cells_.find(key(n)); it != cells_.end()) f(it->second);
        }
      }
    }
  }

  std::span<const PointRecord> pts_;
  double origin_[3] = {0, 0, 0};
  double cell_ = 1.0;
  std::int64_t extent_cells_[3] = {1, 1, 1};
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
};

}  // namespace detail

/// Indices of the k nearest neighbours of point `self` (self excluded),
/// ordered by distance then index.
inline std::vector<std::uint32_t> knn_indices(const PointCloud& cloud, std::size_t self,
                                              std::size_t k,
                                              NeighborSearch mode = NeighborSearch::kBruteForce) {
  std::vector<detail::Neighbor> nb;
  if (mode == NeighborSearch::kGrid) {
    nb = detail::GridKnn(cloud.points, k).query(self, k);
  } else {
    nb = detail::BruteForceKnn(cloud.points).query(self, k);
  }
  std::vector<std::uint32_t> out;
  out.reserve(nb.size());
  for (const auto& n : nb) out.push_back(n.index);
  return out;
}

/// Smallest-eigenvalue-over-trace of the neighbourhood covariance.
/// Zero trace (coincident neighbours) gives 0.
inline double surface_variation(std::span<const PointRecord> pts,
                                std::span<const std::uint32_t> neighbors) {
  const double inv_k = 1.0 / static_cast<double>(neighbors.size());
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (auto j : neighbors) mean += Eigen::Vector3d(pts[j].x, pts[j].y, pts[j].z);
  mean *= inv_k;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (auto j : neighbors) {
    const Eigen::Vector3d d = Eigen::Vector3d(pts[j].x, pts[j].y, pts[j].z) - mean;
    cov.noalias() += d * d.transpose();
  }
  cov *= inv_k;
  const double trace = cov.trace();
  if (!(trace > 0.0)) return 0.0;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov, Eigen::EigenvaluesOnly);
  const double lambda_min = std::max(solver.eigenvalues()(0), 0.0);
  return std::clamp(lambda_min / trace, 0.0, 1.0 / 3.0);
}

/// Raw curvature for every point, in point order.
inline std::vector<double> estimate_raw_curvature(const PointCloud& cloud,
                                                  std::size_t k = kDefaultCurvatureK,
                                                  NeighborSearch mode = NeighborSearch::kAuto) {
  if (k < 3) throw ConfigError("estimate_curvature: k must be >= 3");
  if (cloud.size() < k + 1) {
    throw DegenerateInputError("estimate_curvature: need at least k+1 = " +
                               std::to_string(k + 1) + " points, got " +
                               std::to_string(cloud.size()));
  }
  if (mode == NeighborSearch::kAuto) {
    mode = cloud.size() < kGridThreshold ? NeighborSearch::kBruteForce : NeighborSearch::kGrid;
  }
  std::vector<double> kappa(cloud.size());
  auto run = [&](const auto& index) {
    std::vector<std::uint32_t> ids;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto nb = index.query(i, k);
      ids.clear();
      for (const auto& n : nb) ids.push_back(n.index);
      kappa[i] = surface_variation(cloud.points, ids);
    }
  };
  if (mode == NeighborSearch::kGrid) {
    run(detail::GridKnn(cloud.points, k));
  } else {
    run(detail::BruteForceKnn(cloud.points));
  }
  return kappa;
}

/// Min-max normalization to [0, 1]; a constant input maps to all zeros.
inline std::vector<double> minmax_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / span;
  return out;
}

/// Returns a copy of `cloud` whose curvature field holds the per-frame
/// min-max normalized surface variation.
inline PointCloud estimate_curvature(const PointCloud& cloud, std::size_t k = kDefaultCurvatureK,
                                     NeighborSearch mode = NeighborSearch::kAuto) {
  const auto raw = estimate_raw_curvature(cloud, k, mode);
  const auto norm = minmax_normalize(raw);
  PointCloud out = cloud;
  for (std::size_t i = 0; i < out.size(); ++i) out.points[i].curvature = norm[i];
  return out;
}

}  // namespace polarscan

#endif  // POLARSCAN_CURVATURE_HPP
