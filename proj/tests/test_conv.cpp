#include <gtest/gtest.h>

#include "piunet/piunet.hpp"
#include "piunet/testing/checks.hpp"
#include "piunet/testing/oracles.hpp"

using namespace piunet;
using D = Tensor<double>;

namespace {

std::vector<double> as_vec(const D& t) { return {t.values().begin(), t.values().end()}; }

void expect_near(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(Conv, MatchesOracleForSeveralKernelSizes) {
  std::mt19937_64 rng(1);
  for (int k : {1, 3, 5}) {
    const D x = checks::random_tensor<double>({2, 3, 7, 6}, rng);
    const D w = checks::random_tensor<double>({4, 3, k, k}, rng);
    const D b = checks::random_tensor<double>({4}, rng);
    expect_near(as_vec(conv2d(x, w, b)), oracle::conv2d(as_vec(x), 2, 3, 7, 6, as_vec(w), 4, k, as_vec(b)), 1e-12);
  }
}

TEST(Conv, WithoutBias) {
  std::mt19937_64 rng(2);
  const D x = checks::random_tensor<double>({1, 2, 5, 5}, rng);
  const D w = checks::random_tensor<double>({3, 2, 3, 3}, rng);
  expect_near(as_vec(conv2d(x, w)), oracle::conv2d(as_vec(x), 1, 2, 5, 5, as_vec(w), 3, 3, {}), 1e-12);
}

TEST(Conv, RejectsEvenKernelsAndChannelMismatch) {
  EXPECT_THROW(conv2d(D::zeros({1, 2, 4, 4}), D::zeros({1, 2, 2, 2})), ShapeError);
  EXPECT_THROW(conv2d(D::zeros({1, 2, 4, 4}), D::zeros({1, 3, 3, 3})), ShapeError);
}

TEST(DynamicFilter, EachSampleUsesItsOwnKernelOnEveryChannel) {
  std::mt19937_64 rng(3);
  const int N = 3, C = 2, H = 5, W = 6, k = 3;
  const D x = checks::random_tensor<double>({N, C, H, W}, rng);
  const D kern = checks::random_tensor<double>({N, k, k}, rng);
  const auto got = as_vec(dynamic_filter(x, kern));
  const auto xv = as_vec(x), kv = as_vec(kern);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::vector<double> plane(xv.begin() + (n * C + c) * H * W, xv.begin() + (n * C + c + 1) * H * W);
      const std::vector<double> w(kv.begin() + n * k * k, kv.begin() + (n + 1) * k * k);
      const auto want = oracle::conv2d(plane, 1, 1, H, W, w, 1, k, {});
      for (int i = 0; i < H * W; ++i) EXPECT_NEAR(got[(n * C + c) * H * W + i], want[i], 1e-12);
    }
}

TEST(DynamicFilter, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(4);
  const D x = checks::random_tensor<double>({2, 3, 4, 4}, rng);
  std::vector<double> kv(2 * 25, 0.0);
  kv[12] = kv[25 + 12] = 1.0;
  expect_near(as_vec(dynamic_filter(x, D::from({2, 5, 5}, kv))), as_vec(x), 0);
}

TEST(PixelShuffle, FollowsTheIndexFormula) {
  const int B = 2, C = 2, r = 3, H = 2, W = 3;
  std::vector<double> v(static_cast<std::size_t>(B * C * r * r * H * W));
  std::iota(v.begin(), v.end(), 0.0);
  const D x = D::from({B, C * r * r, H, W}, v);
  const D y = pixel_shuffle(x, r);
  ASSERT_EQ(y.shape(), (Shape{B, C, H * r, W * r}));
  const auto yv = as_vec(y);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          for (int di = 0; di < r; ++di)
            for (int dj = 0; dj < r; ++dj) {
              const double want = v[((b * C * r * r + c * r * r + di * r + dj) * H + i) * W + j];
              EXPECT_EQ(yv[((b * C + c) * H * r + r * i + di) * W * r + r * j + dj], want);
            }
  expect_near(as_vec(pixel_unshuffle(y, r)), v, 0);
}

TEST(Bilinear, MatchesOracleForBothAlignments) {
  std::mt19937_64 rng(5);
  const D x = checks::random_tensor<double>({2, 1, 5, 4}, rng);
  for (auto align : {Alignment::kHalfPixel, Alignment::kCorners}) {
    const auto got = as_vec(bilinear_upsample(x, 3, align));
    const auto xv = as_vec(x);
    for (int p = 0; p < 2; ++p) {
      const std::vector<double> img(xv.begin() + p * 20, xv.begin() + (p + 1) * 20);
      const auto want = oracle::bilinear(img, 5, 4, 3, align == Alignment::kCorners);
      for (int i = 0; i < 180; ++i) EXPECT_NEAR(got[p * 180 + i], want[i], 1e-12);
    }
  }
}

TEST(Bilinear, PreservesConstantsAndFactorOne) {
  const D c = D::full({1, 1, 3, 3}, 7.5);
  const D up = bilinear_upsample(c, 4);
  for (double v : up.values()) EXPECT_NEAR(v, 7.5, 1e-12);
  std::mt19937_64 rng(6);
  const D x = checks::random_tensor<double>({1, 2, 4, 4}, rng);
  expect_near(as_vec(bilinear_upsample(x, 1)), as_vec(x), 1e-15);
}

TEST(Bilinear, HalfPixelKeepsTheMeanOfALinearRamp) {
  // block centres of the upsampled grid coincide with the source pixel centres
  std::vector<double> v(8);
  for (int i = 0; i < 8; ++i) v[i] = i % 4;
  const auto up = as_vec(bilinear_upsample(D::from({1, 1, 2, 4}, v), 3));
  for (int j = 1; j < 3; ++j) {
    double s = 0;
    for (int dj = 0; dj < 3; ++dj) s += up[3 * j + dj];
    EXPECT_NEAR(s / 3, j, 1e-12);
  }
}
