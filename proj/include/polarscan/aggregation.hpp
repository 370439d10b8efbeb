#ifndef POLARSCAN_AGGREGATION_HPP
#define POLARSCAN_AGGREGATION_HPP

/**
 * @file aggregation.hpp
 * @brief Token grid to global descriptor heads.
 *
 * mean_std_pool: g = [mu; sigma] in R^{2c}, population standard deviation.
 *
 * vlad_aggregate: for K centers c_k with sharpness alpha,
 *   a_k(f) = exp(-alpha |f - c_k|^2) / sum_j exp(-alpha |f - c_j|^2)
 *   g_k    = sum_t a_k(f_t) (f_t - c_k)
 * each g_k is scaled to unit length (blocks that cancel to round-off stay
 * zero) and the blocks are concatenated into R^{K c}.
 *
 * Both heads return unnormalized descriptors; l2_normalize() produces the
 * unit vectors used for retrieval.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "polarscan/binary_io.hpp"
#include "polarscan/errors.hpp"
#include "polarscan/features.hpp"

namespace polarscan {

struct GlobalDescriptor {
  std::vector<double> values;
  bool normalized = false;
  std::uint64_t frame_id = 0;

  [[nodiscard]] std::size_t dim() const { return values.size(); }

  friend bool operator==(const GlobalDescriptor&, const GlobalDescriptor&) = default;
};

inline constexpr double kDefaultVladAlpha = 10.0;

/// Blocks whose residual sum is below this fraction of the summed residual
/// magnitudes are treated as exact cancellation.
inline constexpr double kVladCancellationTolerance = 1e-10;

struct VladCodebook {
  std::size_t k = 0;
  std::size_t c = 0;
  std::vector<double> centers;  ///< k x c row-major
  double alpha = kDefaultVladAlpha;

  [[nodiscard]] std::span<const double> center(std::size_t i) const {
    return {centers.data() + i * c, c};
  }

  void validate() const {
    if (k == 0 || c == 0) throw ConfigError("codebook: K and c must be positive");
    if (centers.size() != k * c) throw ShapeError("codebook: centers size != K*c");
    if (!std::isfinite(alpha) || !(alpha > 0.0)) {
      throw ConfigError("codebook: alpha must be finite and positive");
    }
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) {
        if (std::equal(center(a).begin(), center(a).end(), center(b).begin())) {
          throw ConfigError("codebook: centers " + std::to_string(a) + " and " +
                            std::to_string(b) + " are identical");
        }
      }
    }
  }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline GlobalDescriptor mean_std_pool(const FeatureMap& fm) {
  if (fm.h * fm.w == 0) throw DegenerateInputError("mean_std_pool: empty token grid");
  const std::size_t n = fm.h * fm.w;
  GlobalDescriptor g;
  g.frame_id = fm.frame_id;
  g.values.assign(2 * fm.c, 0.0);
  for (std::size_t ch = 0; ch < fm.c; ++ch) {
    const float* plane = fm.data.data() + ch * n;
    double sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) sum += plane[t];
    const double mu = sum / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double d = plane[t] - mu;
      var += d * d;
    }
    g.values[ch] = mu;
    g.values[fm.c + ch] = std::sqrt(var / static_cast<double>(n));
  }
  return g;
}

/// Soft-assignment weights of one token over all centers; sums to 1.
inline std::vector<double> soft_assignment(std::span<const double> token, const VladCodebook& cb) {
  std::vector<double> d(cb.k);
  for (std::size_t i = 0; i < cb.k; ++i) d[i] = squared_distance(token, cb.center(i));
  const double d_min = *std::min_element(d.begin(), d.end());
  double total = 0.0;
  for (auto& v : d) {
    v = std::exp(-cb.alpha * (v - d_min));
    total += v;
  }
  for (auto& v : d) v /= total;
  return d;
}

/// Per-cluster residual sums before intra-normalization, K x c.
struct VladResiduals {
  std::vector<double> blocks;
  std::vector<double> magnitude;  ///< sum_t a_k |f_t - c_k| per cluster
};

inline VladResiduals vlad_residuals(const FeatureMap& fm, const VladCodebook& cb) {
  if (cb.c != fm.c) {
    throw ShapeError("vlad_aggregate: codebook dimension " + std::to_string(cb.c) +
                     " != feature channels " + std::to_string(fm.c));
  }
  VladResiduals out{std::vector<double>(cb.k * cb.c, 0.0), std::vector<double>(cb.k, 0.0)};
  std::vector<double> residual(cb.c);
  for (const auto& token : flatten_tokens(fm)) {
    const auto a = soft_assignment(token, cb);
    for (std::size_t k = 0; k < cb.k; ++k) {
      const auto ck = cb.center(k);
      double norm2 = 0.0;
      for (std::size_t j = 0; j < cb.c; ++j) {
        residual[j] = token[j] - ck[j];
        norm2 += residual[j] * residual[j];
        out.blocks[k * cb.c + j] += a[k] * residual[j];
      }
      out.magnitude[k] += a[k] * std::sqrt(norm2);
    }
  }
  return out;
}

inline GlobalDescriptor vlad_aggregate(const FeatureMap& fm, const VladCodebook& cb) {
  auto raw = vlad_residuals(fm, cb);
  GlobalDescriptor g;
  g.frame_id = fm.frame_id;
  g.values = std::move(raw.blocks);
  for (std::size_t k = 0; k < cb.k; ++k) {
    const std::span<double> block(g.values.data() + k * cb.c, cb.c);
    double norm2 = 0.0;
    for (double v : block) norm2 += v * v;
    const double norm = std::sqrt(norm2);
    if (!(norm > kVladCancellationTolerance * raw.magnitude[k])) {
      std::fill(block.begin(), block.end(), 0.0);
      continue;
    }
    for (double& v : block) v /= norm;
  }
  return g;
}

/// Unit-length copy; the zero vector passes through with normalized = false.
inline GlobalDescriptor l2_normalize(const GlobalDescriptor& g) {
  double norm2 = 0.0;
  for (double v : g.values) norm2 += v * v;
  GlobalDescriptor out = g;
  if (!(norm2 > 0.0)) {
    out.normalized = false;
    return out;
  }
  const double norm = std::sqrt(norm2);
  for (double& v : out.values) v /= norm;
  out.normalized = true;
  return out;
}

// ---------------------------------------------------------------------------
// Codebook initialization
// ---------------------------------------------------------------------------

inline constexpr std::size_t kKmeansIterations = 50;
inline constexpr double kKmeansTolerance = 1e-6;

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits; independent of the
/// standard library's distribution implementations.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Seeded k-means++ followed by Lloyd iterations.
inline VladCodebook init_codebook(std::span<const Token> sample, std::size_t k, std::uint64_t seed,
                                  double alpha = kDefaultVladAlpha) {
  if (k == 0) throw ConfigError("init_codebook: K must be positive");
  if (sample.size() < k) {
    throw DegenerateInputError("init_codebook: sample of " + std::to_string(sample.size()) +
                               " tokens is smaller than K = " + std::to_string(k));
  }
  const std::size_t dim = sample.front().size();
  for (const auto& t : sample) {
    if (t.size() != dim) throw ShapeError("init_codebook: ragged token sample");
  }
  const std::size_t n = sample.size();
  std::mt19937_64 rng(seed);

  VladCodebook cb;
  cb.k = k;
  cb.c = dim;
  cb.alpha = alpha;
  cb.centers.reserve(k * dim);

  auto add_center = [&](std::size_t idx) {
    cb.centers.insert(cb.centers.end(), sample[idx].begin(), sample[idx].end());
  };
  add_center(static_cast<std::size_t>(rng() % n));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(sample[i], cb.center(0));

  for (std::size_t m = 1; m < k; ++m) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0)) {
      throw DegenerateInputError("init_codebook: fewer than K = " + std::to_string(k) +
                                 " distinct tokens in sample");
    }
    const double target = detail::unit_uniform(rng) * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc > target) break;
    }
    add_center(pick);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(sample[i], cb.center(m)));
    }
  }

  std::vector<std::size_t> assign(n);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < kKmeansIterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(sample[i], cb.center(0));
      for (std::size_t j = 1; j < k; ++j) {
        const double d = squared_distance(sample[i], cb.center(j));
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      assign[i] = best;
    }
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[assign[i] * dim + j] += sample[i][j];
    }
    double max_shift = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;  // empty cluster keeps its center
      double shift2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double updated = sums[j * dim + d] / static_cast<double>(counts[j]);
        const double delta = updated - cb.centers[j * dim + d];
        shift2 += delta * delta;
        cb.centers[j * dim + d] = updated;
      }
      max_shift = std::max(max_shift, std::sqrt(shift2));
    }
    if (max_shift < kKmeansTolerance) break;
  }
  cb.validate();
  return cb;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

// PDSC: "PDSC", u32 version, u32 N, u32 L, u8 normalized, N x u64 frame ids,
// N*L float32 row-major.
inline constexpr std::uint32_t kPdscVersion = 1;

inline std::vector<std::uint8_t> save_descriptors(std::span<const GlobalDescriptor> descs) {
  const std::size_t dim = descs.empty() ? 0 : descs.front().dim();
  bool all_normalized = !descs.empty();
  for (const auto& d : descs) {
    if (d.dim() != dim) throw ShapeError("PDSC: mixed descriptor dimensions");
    all_normalized = all_normalized && d.normalized;
  }
  io::ByteWriter w;
  w.magic("PDSC");
  w.u32(kPdscVersion);
  w.u32(static_cast<std::uint32_t>(descs.size()));
  w.u32(static_cast<std::uint32_t>(dim));
  w.u8(all_normalized ? 1 : 0);
  for (const auto& d : descs) w.u64(d.frame_id);
  for (const auto& d : descs) {
    for (double v : d.values) w.f32(static_cast<float>(v));
  }
  return std::move(w).bytes();
}

inline std::vector<GlobalDescriptor> load_descriptors(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "PDSC");
  r.expect_magic("PDSC");
  if (const auto v = r.u32(); v != kPdscVersion) {
    throw FormatError("PDSC: unsupported version " + std::to_string(v));
  }
  const std::size_t n = r.u32();
  const std::size_t dim = r.u32();
  const bool normalized = r.u8() != 0;
  if (r.remaining() != n * sizeof(std::uint64_t) + n * dim * sizeof(float)) {
    throw FormatError("PDSC: truncated or oversized payload");
  }
  std::vector<GlobalDescriptor> out(n);
  for (auto& d : out) d.frame_id = r.u64();
  for (std::size_t i = 0; i < n; ++i) {
    auto& d = out[i];
    d.values.resize(dim);
    bool nonzero = false;
    for (std::size_t j = 0; j < dim; ++j) {
      const float v = r.f32();
      if (!std::isfinite(v)) {
        throw ValidationError("PDSC: non-finite value in descriptor " + std::to_string(i));
      }
      d.values[j] = v;
      nonzero = nonzero || v != 0.0f;
    }
    d.normalized = normalized && nonzero;
  }
  return out;
}

// PVLD: "PVLD", u32 K, u32 c, float32 alpha, K*c float32 centers.
inline std::vector<std::uint8_t> save_codebook(const VladCodebook& cb) {
  io::ByteWriter w;
  w.magic("PVLD");
  w.u32(static_cast<std::uint32_t>(cb.k));
  w.u32(static_cast<std::uint32_t>(cb.c));
  w.f32(static_cast<float>(cb.alpha));
  for (double v : cb.centers) w.f32(static_cast<float>(v));
  return std::move(w).bytes();
}

inline VladCodebook load_codebook(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "PVLD");
  r.expect_magic("PVLD");
  VladCodebook cb;
  cb.k = r.u32();
  cb.c = r.u32();
  cb.alpha = r.f32();
  if (r.remaining() != cb.k * cb.c * sizeof(float)) {
    throw FormatError("PVLD: truncated or oversized payload");
  }
  cb.centers.resize(cb.k * cb.c);
  for (auto& v : cb.centers) {
    v = r.f32();
    if (!std::isfinite(v)) throw ValidationError("PVLD: non-finite center value");
  }
  cb.validate();
  return cb;
}

}  // namespace polarscan

#endif  // POLARSCAN_AGGREGATION_HPP
