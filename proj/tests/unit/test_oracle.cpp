#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fdp/oracle/dynamic_image.hpp"

using namespace fdp::oracle;

namespace {

std::vector<Image> random_frames(std::size_t T, std::size_t c, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 0.8);
  std::vector<Image> frames(T, Image(c, n, n));
  for (auto& f : frames)
    for (auto& v : f.pixels) v = u(rng);
  return frames;
}

}  // namespace

TEST(RankPool, HandDerivedCoefficients) {
  const auto a2 = rank_pool_coefficients(2);
  ASSERT_EQ(a2.size(), 2u);
  EXPECT_NEAR(a2[0], -0.5, 1e-12);
  EXPECT_NEAR(a2[1], 0.5, 1e-12);
  const auto a3 = rank_pool_coefficients(3);
  EXPECT_NEAR(a3[0], -4.0 / 3.0, 1e-12);
  EXPECT_NEAR(a3[1], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(a3[2], 2.0 / 3.0, 1e-12);
}

TEST(RankPool, CoefficientsSumToZero) {
  for (std::size_t T = 2; T <= 64; ++T) {
    const auto a = rank_pool_coefficients(T);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 0.0, 1e-9) << T;
  }
}

// Consecutive coefficients differ by (T + 1)/t - 2, so the closed form rises
// over the first half of the clip and falls after it.
TEST(RankPool, ConsecutiveDifferenceIdentity) {
  for (std::size_t T = 2; T <= 64; ++T) {
    const auto a = rank_pool_coefficients(T);
    for (std::size_t t = 1; t < T; ++t) {
      EXPECT_NEAR(a[t] - a[t - 1], static_cast<double>(T + 1) / t - 2.0, 1e-9) << T << " " << t;
    }
  }
}

TEST(RankPool, FirstCoefficientIsMinimal) {
  for (std::size_t T = 2; T <= 64; ++T) {
    const auto a = rank_pool_coefficients(T);
    EXPECT_EQ(std::min_element(a.begin(), a.end()), a.begin()) << T;
    EXPECT_LT(a.front(), 0.0);
  }
}

TEST(RankPool, TooFewFramesRejected) {
  EXPECT_THROW(rank_pool_coefficients(1), fdp::UsageError);
  EXPECT_THROW(dynamic_image(random_frames(1, 1, 4, 1)), fdp::UsageError);
}

TEST(DynamicImage, ConstantClipIsMidGray) {
  const std::vector<Image> frames(5, Image(3, 6, 6, 0.37));
  const auto d = dynamic_image(frames);
  EXPECT_EQ(d.channels, 1u);
  for (double v : d.pixels) EXPECT_EQ(v, 0.5);
}

TEST(DynamicImage, TwoFramesAreNormalizedHalfDifference) {
  const auto f = random_frames(2, 1, 5, 2);
  Image half(1, 5, 5);
  for (std::size_t i = 0; i < half.pixels.size(); ++i) half.pixels[i] = 0.5 * (f[1].pixels[i] - f[0].pixels[i]);
  const auto d = dynamic_image(f);
  const auto expect = normalize(half);
  for (std::size_t i = 0; i < d.pixels.size(); ++i) EXPECT_NEAR(d.pixels[i], expect.pixels[i], 1e-12);
}

TEST(DynamicImage, OffsetInvariance) {
  for (std::size_t T : {2u, 5u, 8u}) {
    auto frames = random_frames(T, 1, 6, T);
    const auto base = dynamic_image(frames);
    for (auto& f : frames)
      for (auto& v : f.pixels) v += 0.125;
    const auto shifted = dynamic_image(frames);
    for (std::size_t i = 0; i < base.pixels.size(); ++i) {
      EXPECT_NEAR(shifted.pixels[i], base.pixels[i], 1e-12);
      EXPECT_EQ(fdp::data::quantize(shifted.pixels[i]), fdp::data::quantize(base.pixels[i]));
    }
  }
}

TEST(DynamicImage, OutputInUnitRange) {
  const auto d = dynamic_image(random_frames(7, 3, 8, 3));
  double lo = 1, hi = 0;
  for (double v : d.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_EQ(lo, 0.0);
  EXPECT_EQ(hi, 1.0);
}

TEST(DynamicImage, UniformRampIsPositiveConstantBeforeNormalization) {
  const std::size_t T = 6;
  std::vector<Image> frames;
  for (std::size_t t = 1; t <= T; ++t) frames.emplace_back(1, 4, 4, static_cast<double>(t) / T);
  const auto rho = rank_pool(frames);
  for (double v : rho.pixels) {
    EXPECT_GT(v, 0.0);
    EXPECT_NEAR(v, rho.pixels[0], 1e-12);
  }
  for (double v : dynamic_image(frames).pixels) EXPECT_EQ(v, 0.5);
}

TEST(DynamicImage, ColorEqualsMeanOfChannelPools) {
  const auto frames = random_frames(5, 3, 6, 4);
  const auto rho = rank_pool(frames);
  std::vector<Image> per_channel[3];
  for (const auto& f : frames)
    for (std::size_t c = 0; c < 3; ++c) {
      Image g(1, 6, 6);
      for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = f.pixels[c * 36 + i];
      per_channel[c].push_back(g);
    }
  const Image r0 = rank_pool(per_channel[0]), r1 = rank_pool(per_channel[1]), r2 = rank_pool(per_channel[2]);
  for (std::size_t i = 0; i < rho.pixels.size(); ++i) {
    EXPECT_NEAR(rho.pixels[i], (r0.pixels[i] + r1.pixels[i] + r2.pixels[i]) / 3.0, 1e-6);
  }
}

TEST(DynamicImage, MismatchedExtentsRejected) {
  std::vector<Image> frames{Image(1, 4, 4), Image(1, 4, 5)};
  EXPECT_THROW(dynamic_image(frames), fdp::DataError);
}

TEST(AverageMse, Examples) {
  const std::vector<Image> a{Image(1, 3, 3, 0.2), Image(1, 3, 3, 0.7)};
  EXPECT_EQ(average_mse(a, a), 0.0);
  const std::vector<Image> half{Image(1, 4, 4, 0.5)}, one{Image(1, 4, 4, 1.0)};
  EXPECT_DOUBLE_EQ(average_mse(half, one), 0.25);
  const std::vector<Image> b{Image(1, 3, 3, 0.2), Image(1, 3, 3, 0.2)};
  EXPECT_NEAR(average_mse(a, b), 0.125, 1e-15);
}

TEST(AverageMse, Errors) {
  const std::vector<Image> none;
  EXPECT_THROW(average_mse(none, none), fdp::UsageError);
  const std::vector<Image> a{Image(1, 3, 3)}, b{Image(1, 3, 4)};
  EXPECT_THROW(average_mse(a, b), fdp::DataError);
}
