#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "polarscan/aggregation.hpp"

using namespace polarscan;

namespace {

FeatureMap map_of(std::size_t c, std::size_t h, std::size_t w, std::vector<float> data) {
  FeatureMap fm;
  fm.c = c;
  fm.h = h;
  fm.w = w;
  fm.data = std::move(data);
  return fm;
}

VladCodebook codebook(std::size_t k, std::size_t c, std::vector<double> centers, double alpha) {
  VladCodebook cb;
  cb.k = k;
  cb.c = c;
  cb.centers = std::move(centers);
  cb.alpha = alpha;
  return cb;
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

// --- mean / std -------------------------------------------------------------

TEST(MeanStdPool, ConstantMap) {
  const auto g = mean_std_pool(map_of(2, 2, 2, std::vector<float>(8, 2.0f)));
  EXPECT_EQ(g.values, (std::vector<double>{2, 2, 0, 0}));
  EXPECT_FALSE(g.normalized);
}

TEST(MeanStdPool, TwoValuesEqualCounts) {
  const auto g = mean_std_pool(map_of(1, 2, 2, {0, 2, 2, 0}));
  EXPECT_EQ(g.values, (std::vector<double>{1, 1}));
}

TEST(MeanStdPool, MatchesTwoPassOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto fm = oracle::random_map(rng, 1 + trial % 8, 1 + trial % 32, 32 - trial % 7, -5, 5);
    const auto g = mean_std_pool(fm);
    const auto ref = oracle::mean_std(fm);
    ASSERT_EQ(g.dim(), 2 * fm.c);
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(g.values[i], ref[i], 1e-12);
  }
  const auto fm = oracle::random_map(rng, 3, 4, 4);
  const auto g = mean_std_pool(fm);
  const auto ref = oracle::mean_std(fm);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(g.values[i], ref[i], 1e-12);
}

// --- VLAD -------------------------------------------------------------------

TEST(Vlad, SingleClusterAtTokenMeanIsZero) {
  std::mt19937_64 rng(2);
  const auto fm = oracle::random_map(rng, 4, 5, 6);
  std::vector<double> mean(4, 0.0);
  for (const auto& t : flatten_tokens(fm)) {
    for (std::size_t i = 0; i < 4; ++i) mean[i] += t[i] / 30.0;
  }
  const auto g = vlad_aggregate(fm, codebook(1, 4, mean, 10.0));
  EXPECT_EQ(g.values, std::vector<double>(4, 0.0));
  EXPECT_FALSE(l2_normalize(g).normalized);
}

TEST(Vlad, TwoTokensTwoCentersScalarOracle) {
  const auto fm = map_of(1, 1, 2, {0.0f, 2.0f});
  const auto cb = codebook(2, 1, {0.0, 2.0}, 1.0);
  // Token 0 sits on centre 0: weights (1, e^-4) / (1 + e^-4); token 2 mirrors it.
  const double w_near = 1.0 / (1.0 + std::exp(-4.0));
  const double w_far = std::exp(-4.0) / (1.0 + std::exp(-4.0));
  const double g0 = w_near * 0.0 + w_far * 2.0;   // residuals to centre 0
  const double g1 = w_far * -2.0 + w_near * 0.0;  // residuals to centre 2
  const auto raw = vlad_residuals(fm, cb);
  EXPECT_NEAR(raw.blocks[0], g0, 1e-15);
  EXPECT_NEAR(raw.blocks[1], g1, 1e-15);
  const auto g = vlad_aggregate(fm, cb);
  EXPECT_NEAR(g.values[0], 1.0, 1e-12);
  EXPECT_NEAR(g.values[1], -1.0, 1e-12);
  const auto ref = oracle::vlad(fm, cb.centers, 2, 1.0);
  EXPECT_NEAR(g.values[0], ref[0], 1e-12);
  EXPECT_NEAR(g.values[1], ref[1], 1e-12);
}

TEST(Vlad, SharpAssignmentSingleTokenOnCentre) {
  const auto fm = map_of(2, 1, 1, {0.3f, -0.2f});
  const auto cb = codebook(2, 2, {0.3f, -0.2f, 1.0, 1.0}, 100.0);
  const auto raw = vlad_residuals(fm, cb);
  const auto ref = oracle::vlad(fm, cb.centers, 2, 100.0, false);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(raw.blocks[i], ref[i], 1e-6);
  EXPECT_LE(std::hypot(raw.blocks[2], raw.blocks[3]), 1e-3);
}

TEST(Vlad, AllTokensOnOneCentreLeaveOtherBlocksSmall) {
  std::vector<float> data;
  const std::vector<double> centre = {0.5, -1.0, 2.0};
  const std::size_t n = 12;
  FeatureMap fm;
  fm.c = 3;
  fm.h = 3;
  fm.w = 4;
  fm.data.resize(3 * n);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t t = 0; t < n; ++t) fm.data[ch * n + t] = static_cast<float>(centre[ch]);
  }
  const auto cb = codebook(3, 3, {0.5, -1.0, 2.0, 1.5, 0.0, 2.0, 0.5, -1.0, 3.0}, 100.0);
  const auto raw = vlad_residuals(fm, cb);
  for (std::size_t k = 1; k < 3; ++k) {
    const double bn = std::sqrt(raw.blocks[3 * k] * raw.blocks[3 * k] + raw.blocks[3 * k + 1] * raw.blocks[3 * k + 1] +
                                raw.blocks[3 * k + 2] * raw.blocks[3 * k + 2]);
    EXPECT_LE(bn, 1e-3) << k;
  }
}

TEST(Vlad, MatchesScalarOracleOnRandomMaps) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 2 + trial % 5, k = 1 + trial % 6;
    const auto fm = oracle::random_map(rng, c, 4 + trial % 3, 5);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> centers(k * c);
    for (auto& v : centers) v = u(rng);
    const double alpha = 0.5 + trial % 4;
    const auto g = vlad_aggregate(fm, codebook(k, c, centers, alpha));
    const auto ref = oracle::vlad(fm, centers, k, alpha);
    ASSERT_EQ(g.dim(), k * c);
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(g.values[i], ref[i], 1e-9) << trial << ":" << i;
  }
}

TEST(Vlad, SoftAssignmentSumsToOne) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> centers(6 * 5);
  for (auto& v : centers) v = u(rng);
  for (double alpha : {0.01, 1.0, 10.0, 1000.0}) {
    const auto cb = codebook(6, 5, centers, alpha);
    for (int t = 0; t < 200; ++t) {
      Token tok(5);
      for (auto& v : tok) v = u(rng);
      const auto a = soft_assignment(tok, cb);
      double s = 0;
      for (double v : a) {
        ASSERT_GE(v, 0.0);
        s += v;
      }
      ASSERT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Vlad, DimensionMismatch) {
  const auto fm = map_of(2, 1, 1, {0.0f, 0.0f});
  EXPECT_THROW(vlad_aggregate(fm, codebook(1, 3, {0, 0, 0}, 1.0)), ShapeError);
}

TEST(Vlad, IntraNormalizedBlocks) {
  std::mt19937_64 rng(5);
  const auto fm = oracle::random_map(rng, 4, 6, 6);
  const auto g = vlad_aggregate(fm, codebook(3, 4, {0.2, 0.1, 0, 0, -0.5, 0.3, 0.1, 0, 0.4, -0.4, 0.2, 0.6}, 2.0));
  for (std::size_t k = 0; k < 3; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i) s += g.values[k * 4 + i] * g.values[k * 4 + i];
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-12);
  }
}

TEST(Codebook, ValidateRejectsDuplicateCentres) {
  EXPECT_THROW(codebook(2, 2, {1, 2, 1, 2}, 1.0).validate(), ConfigError);
  EXPECT_THROW(codebook(1, 2, {1, 2}, 0.0).validate(), ConfigError);
}

// --- normalization ----------------------------------------------------------

TEST(L2Normalize, ThreeFour) {
  const auto g = l2_normalize(GlobalDescriptor{{3, 4}, false, 0});
  EXPECT_EQ(g.values, (std::vector<double>{0.6, 0.8}));
  EXPECT_TRUE(g.normalized);
}

TEST(L2Normalize, UnitVectorUnchanged) {
  const auto g = l2_normalize(GlobalDescriptor{{0, 1, 0}, false, 0});
  EXPECT_EQ(g.values, (std::vector<double>{0, 1, 0}));
}

TEST(L2Normalize, ZeroPassesThrough) {
  const auto g = l2_normalize(GlobalDescriptor{{0, 0, 0}, true, 4});
  EXPECT_EQ(g.values, (std::vector<double>{0, 0, 0}));
  EXPECT_FALSE(g.normalized);
  EXPECT_EQ(g.frame_id, 4u);
}

TEST(L2Normalize, IdempotentAndUnit) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 3);
  for (int t = 0; t < 100; ++t) {
    GlobalDescriptor g;
    g.values.resize(1 + t % 40);
    for (auto& v : g.values) v = n(rng);
    const auto a = l2_normalize(g);
    const auto b = l2_normalize(a);
    EXPECT_NEAR(norm(a.values), 1.0, 1e-12);
    for (std::size_t i = 0; i < a.values.size(); ++i) ASSERT_NEAR(a.values[i], b.values[i], 1e-15);
  }
}

TEST(L2Normalize, SquaredDistanceIsTwoMinusTwoDot) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 200; ++t) {
    GlobalDescriptor a, b;
    a.values.resize(64);
    b.values.resize(64);
    for (auto& v : a.values) v = n(rng);
    for (auto& v : b.values) v = n(rng);
    a = l2_normalize(a);
    b = l2_normalize(b);
    double dot = 0;
    for (std::size_t i = 0; i < 64; ++i) dot += a.values[i] * b.values[i];
    ASSERT_NEAR(squared_distance(a.values, b.values), 2.0 - 2.0 * dot, 1e-9);
  }
}

// --- k-means ----------------------------------------------------------------

TEST(InitCodebook, SingleClusterIsSampleMean) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-4, 4);
  std::vector<Token> sample(50, Token(3));
  std::vector<double> mean(3, 0);
  for (auto& t : sample) {
    for (std::size_t i = 0; i < 3; ++i) {
      t[i] = u(rng);
      mean[i] += t[i] / 50.0;
    }
  }
  const auto cb = init_codebook(sample, 1, 99);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(cb.centers[i], mean[i], 1e-12);
}

TEST(InitCodebook, SeparatedBlobsRecoverBlobMeans) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Token> sample;
  double m0[2] = {0, 0}, m1[2] = {0, 0};
  for (int i = 0; i < 40; ++i) {
    Token a{u(rng), u(rng)}, b{100 + u(rng), -50 + u(rng)};
    m0[0] += a[0] / 40;
    m0[1] += a[1] / 40;
    m1[0] += b[0] / 40;
    m1[1] += b[1] / 40;
    sample.push_back(a);
    sample.push_back(b);
  }
  const auto cb = init_codebook(sample, 2, 5);
  const bool first_is_origin = std::abs(cb.centers[0]) < 10;
  const auto c0 = first_is_origin ? cb.center(0) : cb.center(1);
  const auto c1 = first_is_origin ? cb.center(1) : cb.center(0);
  EXPECT_NEAR(c0[0], m0[0], 1e-6);
  EXPECT_NEAR(c0[1], m0[1], 1e-6);
  EXPECT_NEAR(c1[0], m1[0], 1e-6);
  EXPECT_NEAR(c1[1], m1[1], 1e-6);
}

TEST(InitCodebook, DeterministicForSeed) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 1);
  std::vector<Token> sample(300, Token(8));
  for (auto& t : sample) {
    for (auto& v : t) v = n(rng);
  }
  const auto a = init_codebook(sample, 8, 1234);
  const auto b = init_codebook(sample, 8, 1234);
  EXPECT_EQ(a.centers, b.centers);
  EXPECT_EQ(save_codebook(a), save_codebook(b));
}

TEST(InitCodebook, SampleSmallerThanK) {
  std::vector<Token> sample(3, Token{1.0});
  EXPECT_THROW(init_codebook(sample, 4, 0), DegenerateInputError);
}

TEST(InitCodebook, TooFewDistinctTokens) {
  std::vector<Token> sample = {{1.0}, {1.0}, {1.0}, {2.0}};
  EXPECT_THROW(init_codebook(sample, 3, 0), DegenerateInputError);
}

// --- files ------------------------------------------------------------------

TEST(Pdsc, RoundTripFloat32) {
  std::vector<GlobalDescriptor> descs;
  for (std::uint64_t f = 0; f < 5; ++f) descs.push_back(l2_normalize(GlobalDescriptor{{1.0 + f, 2.0, -3.0}, false, f * 10}));
  const auto back = load_descriptors(save_descriptors(descs));
  ASSERT_EQ(back.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(back[i].frame_id, descs[i].frame_id);
    EXPECT_TRUE(back[i].normalized);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(back[i].values[j], static_cast<float>(descs[i].values[j]));
  }
}

TEST(Pdsc, TamperedMagic) {
  auto bytes = save_descriptors(std::vector<GlobalDescriptor>{{{1.0}, true, 0}});
  bytes[1] = 'Z';
  EXPECT_THROW(load_descriptors(bytes), FormatError);
}

TEST(Pdsc, MixedDimensionsRejected) {
  const std::vector<GlobalDescriptor> descs = {{{1.0, 0.0}, true, 0}, {{1.0}, true, 1}};
  EXPECT_THROW(save_descriptors(descs), ShapeError);
}

TEST(Pvld, RoundTrip) {
  const auto cb = codebook(2, 3, {0.5, 0.25, -1, 2, 3, 4}, 10.0);
  const auto back = load_codebook(save_codebook(cb));
  EXPECT_EQ(back.k, 2u);
  EXPECT_EQ(back.c, 3u);
  EXPECT_EQ(back.alpha, 10.0);
  EXPECT_EQ(back.centers, cb.centers);
}
