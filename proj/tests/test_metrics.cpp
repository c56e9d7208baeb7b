#include <gtest/gtest.h>

#include "piunet/piunet.hpp"
#include "piunet/testing/checks.hpp"
#include "piunet/testing/oracles.hpp"

using namespace piunet;

namespace {

oracle::Plane to_plane(const ImageF& img) { return {static_cast<int>(img.height), static_cast<int>(img.width), img.data}; }

oracle::Plane to_plane(const Mask& m) {
  oracle::Plane p{static_cast<int>(m.height), static_cast<int>(m.width), {}};
  for (auto v : m.data) p.v.push_back(v ? 1.0 : 0.0);
  return p;
}

ImageF random_image(std::int64_t n, std::mt19937_64& rng, double level = 5000, double spread = 800) {
  std::normal_distribution<double> g(level, spread);
  ImageF img(n, n);
  for (auto& v : img.data) v = g(rng);
  return img;
}

Mask random_mask(std::int64_t n, std::mt19937_64& rng, double p = 0.85) {
  std::bernoulli_distribution b(p);
  Mask m(n, n);
  for (auto& v : m.data) v = b(rng) ? 1 : 0;
  return m;
}

}  // namespace

TEST(Cpsnr, EqualsBruteForceSearch) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    const auto c = checks::random_oracle_case(rng);
    const ImageF sr = tensor_plane(c.mu), hr = tensor_plane(c.hr);
    Mask m(hr.height, hr.width);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = c.mask.vec()[i] != 0.0;
    const auto want = oracle::cpsnr(to_plane(sr), to_plane(hr), to_plane(m), 3, 6);
    const auto got = cpsnr(sr, hr, m);
    EXPECT_EQ(got.value, want.value);
    EXPECT_EQ(got.u, want.u);
    EXPECT_EQ(got.v, want.v);
    EXPECT_EQ(got.bias, want.bias);
  }
}

TEST(Cpsnr, IdenticalImagesScoreInfinity) {
  std::mt19937_64 rng(2);
  const ImageF hr = random_image(20, rng);
  const Mask m = random_mask(20, rng);
  const auto r = cpsnr(hr, hr, m);
  EXPECT_TRUE(std::isinf(r.value));
  EXPECT_EQ(r.u, 3);
  EXPECT_EQ(r.v, 3);
  EXPECT_EQ(format_metric(r.value), "inf");
  EXPECT_DOUBLE_EQ(cssim(hr, hr, m), 1.0);
}

TEST(Cpsnr, InsensitiveToABrightnessOffset) {
  std::mt19937_64 rng(3);
  const ImageF hr = random_image(20, rng), sr = random_image(20, rng);
  ImageF brighter = sr;
  for (auto& v : brighter.data) v += 250;
  const Mask m = random_mask(20, rng);
  EXPECT_NEAR(cpsnr(sr, hr, m).value, cpsnr(brighter, hr, m).value, 1e-9);
}

TEST(Cpsnr, PsnrFromMse) {
  EXPECT_NEAR(psnr_from_mse(1.0), 20 * std::log10(65535.0), 1e-12);
  EXPECT_NEAR(psnr_from_mse(65535.0 * 65535.0 / 100.0), 20.0, 1e-12);
  EXPECT_TRUE(std::isinf(psnr_from_mse(0.0)));
}

TEST(Cpsnr, RejectsMismatchedSizes) {
  EXPECT_THROW(cpsnr(ImageF(20, 20), ImageF(18, 18), Mask(18, 18)), Error);
}

TEST(Ssim, GaussianTapsAreNormalizedAndSymmetric) {
  const auto w = gaussian_taps(11, 1.5);
  double s = 0;
  for (double v : w) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(w[i], w[10 - i]);
  EXPECT_GT(w[5], w[4]);
}

TEST(Ssim, MatchesOracle) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 5; ++k) {
    const ImageF a = random_image(18, rng), b = random_image(18, rng, 5100, 700);
    const Mask m = random_mask(18, rng, 0.7);
    EXPECT_NEAR(ssim_masked(a, b, m), oracle::ssim(to_plane(a), to_plane(b), to_plane(m)), 1e-12);
  }
}

TEST(Ssim, CssimUsesTheCpsnrAlignment) {
  std::mt19937_64 rng(5);
  const ImageF hr = random_image(24, rng), sr = random_image(24, rng);
  const Mask m = random_mask(24, rng);
  const auto c = oracle::cpsnr(to_plane(sr), to_plane(hr), to_plane(m), 3, 6);
  oracle::Plane a{18, 18, {}}, b{18, 18, {}}, mc{18, 18, {}};
  for (int y = 0; y < 18; ++y)
    for (int x = 0; x < 18; ++x) {
      a.v.push_back(sr.at(y + 3, x + 3) + c.bias);
      b.v.push_back(hr.at(y + c.u, x + c.v));
      mc.v.push_back(m.at(y + c.u, x + c.v));
    }
  EXPECT_NEAR(cssim(sr, hr, m), oracle::ssim(a, b, mc), 1e-12);
}

TEST(Report, CsvAndMeans) {
  EvalReport r;
  r.rows.push_back({"a", 40.0, 0.9, 1, 2, 3.5});
  r.rows.push_back({"b", std::numeric_limits<double>::infinity(), 1.0, 3, 3, 0});
  r.rows.push_back({"c", 50.0, 0.8, 0, 0, -1});
  EXPECT_DOUBLE_EQ(r.mean_cpsnr(), 45.0);
  EXPECT_EQ(r.infinite_count(), 1);
  EXPECT_NEAR(r.mean_cssim(), 0.9, 1e-15);
  EXPECT_EQ(r.csv(), "scene,cpsnr,cssim,u,v,bias\na,40,0.90000000000000002,1,2,3.5\nb,inf,1,3,3,0\nc,50,"
                     "0.80000000000000004,0,0,-1\n");
}

TEST(Report, AllInfiniteMeanIsInfinite) {
  EvalReport r;
  r.rows.push_back({"a", std::numeric_limits<double>::infinity(), 1.0, 3, 3, 0});
  EXPECT_EQ(format_metric(r.mean_cpsnr()), "inf");
}

TEST(Report, FormatMetricRoundTrips) {
  const double v = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_metric(v)), v);
  EXPECT_EQ(format_metric(-std::numeric_limits<double>::infinity()), "-inf");
}
