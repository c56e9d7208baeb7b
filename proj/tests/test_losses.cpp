#include <gtest/gtest.h>

#include "piunet/piunet.hpp"
#include "piunet/testing/checks.hpp"
#include "piunet/testing/oracles.hpp"

using namespace piunet;
using D = Tensor<double>;

namespace {

struct Planes {
  std::vector<oracle::Plane> mu, delta, hr, mask;
};

Planes planes(const checks::OracleCase& c) {
  Planes p;
  for (std::int64_t b = 0; b < c.mu.dim(0); ++b) {
    p.mu.push_back(checks::plane_of(c.mu, b));
    p.delta.push_back(checks::plane_of(c.delta, b));
    p.hr.push_back(checks::plane_of(c.hr, b));
    p.mask.push_back(checks::plane_of(c.mask, b));
  }
  return p;
}

D image(std::int64_t n, const std::function<double(std::int64_t, std::int64_t)>& f) {
  std::vector<double> v;
  for (std::int64_t y = 0; y < n; ++y)
    for (std::int64_t x = 0; x < n; ++x) v.push_back(f(y, x));
  return D::from({1, 1, n, n}, v);
}

}  // namespace

TEST(RegisteredLoss, NllEqualsBruteForceSearch) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) {
    const auto c = checks::random_oracle_case(rng);
    const Planes p = planes(c);
    int u = -1, v = -1;
    const double want = oracle::registered_loss(p.mu, p.delta, p.hr, p.mask, 3, 6, &u, &v);
    const auto got = registered_nll_search(c.mu, c.delta, c.hr, c.mask);
    EXPECT_EQ(got.loss.item(), want);
    ASSERT_EQ(got.shifts.size(), 1u);
    EXPECT_EQ(got.shifts[0].u, u);
    EXPECT_EQ(got.shifts[0].v, v);
    EXPECT_EQ(got.window_losses.size(), 49u);
  }
}

TEST(RegisteredLoss, L1EqualsBruteForceSearch) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 20; ++k) {
    const auto c = checks::random_oracle_case(rng);
    const Planes p = planes(c);
    EXPECT_EQ(l1_registered(c.mu, c.hr, c.mask).item(), oracle::registered_loss(p.mu, {}, p.hr, p.mask, 3, 6));
  }
}

TEST(RegisteredLoss, PerImageReductionSearchesEachImage) {
  std::mt19937_64 rng(13);
  ShiftSearchConfig cfg;
  cfg.reduction = ShiftReduction::kPerImage;
  for (int k = 0; k < 10; ++k) {
    const auto c = checks::random_oracle_case(rng);
    const Planes p = planes(c);
    double want = 0;
    const auto got = registered_nll_search(c.mu, c.delta, c.hr, c.mask, cfg);
    ASSERT_EQ(got.shifts.size(), p.mu.size());
    for (std::size_t j = 0; j < p.mu.size(); ++j) {
      int u = -1, v = -1;
      want += oracle::registered_loss({p.mu[j]}, {p.delta[j]}, {p.hr[j]}, {p.mask[j]}, 3, 6, &u, &v);
      EXPECT_EQ(got.shifts[j].u, u);
      EXPECT_EQ(got.shifts[j].v, v);
    }
    want /= static_cast<double>(p.mu.size());
    EXPECT_NEAR(got.loss.item(), want, 1e-12 * std::abs(want));
  }
}

TEST(RegisteredLoss, TiesGoToTheSmallestShift) {
  const D flat = D::full({2, 1, 12, 12}, 5.0), ones = D::ones({2, 1, 12, 12});
  const auto r = l1_registered_search(flat, flat, ones);
  EXPECT_EQ(r.shifts[0].u, 0);
  EXPECT_EQ(r.shifts[0].v, 0);
  EXPECT_EQ(r.loss.item(), 0.0);
}

TEST(RegisteredLoss, RecoversAKnownShift) {
  const auto f = [](std::int64_t y, std::int64_t x) { return std::sin(0.7 * y) + std::cos(1.3 * x + 0.2 * y); };
  const std::int64_t n = 16;
  const D hr = image(n, f);
  // SR pixel (y, x) inside the crop sees HR pixel (y - 3 + 2, x - 3 + 5)
  const D mu = image(n, [&](std::int64_t y, std::int64_t x) { return f(y - 1, x + 2) + 0.3; });
  const auto r = l1_registered_search(mu, hr, D::ones({1, 1, n, n}));
  EXPECT_EQ(r.shifts[0].u, 2);
  EXPECT_EQ(r.shifts[0].v, 5);
  EXPECT_NEAR(r.loss.item(), 0.0, 1e-12);
}

TEST(RegisteredLoss, InsensitiveToABrightnessOffset) {
  std::mt19937_64 rng(14);
  const auto c = checks::random_oracle_case(rng);
  const double a = l1_registered(c.mu, c.hr, c.mask).item();
  const double b = l1_registered(add_scalar(c.mu, 123.0), c.hr, c.mask).item();
  EXPECT_NEAR(a, b, 1e-9 * std::abs(a));
}

TEST(RegisteredLoss, GradientVanishesOutsideTheComparedPixels) {
  std::mt19937_64 rng(15);
  auto c = checks::random_oracle_case(rng);
  D mu = c.mu.detach().set_requires_grad(true);
  D delta = c.delta.detach().set_requires_grad(true);
  const auto r = registered_nll_search(mu, delta, c.hr, c.mask);
  r.loss.backward();
  const std::int64_t n = mu.dim(2), out = n - 6;
  const auto gm = mu.grad(), gd = delta.grad();
  for (std::int64_t b = 0; b < mu.dim(0); ++b)
    for (std::int64_t y = 0; y < n; ++y)
      for (std::int64_t x = 0; x < n; ++x) {
        const auto i = static_cast<std::size_t>((b * n + y) * n + x);
        const bool inside = y >= 3 && y < 3 + out && x >= 3 && x < 3 + out;
        bool clear = false;
        if (inside) {
          const auto hy = y - 3 + r.shifts[0].u, hx = x - 3 + r.shifts[0].v;
          clear = c.mask.vec()[static_cast<std::size_t>((b * n + hy) * n + hx)] != 0.0;
        }
        if (!clear) {
          EXPECT_EQ(gm[i], 0.0);
          EXPECT_EQ(gd[i], 0.0);
        }
      }
}

TEST(PlainLosses, LaplaceWithZeroDeltaIsMaskedL1) {
  std::mt19937_64 rng(16);
  for (int k = 0; k < 10; ++k) {
    const D mu = checks::random_tensor<double>({2, 1, 5, 5}, rng), hr = checks::random_tensor<double>({2, 1, 5, 5}, rng);
    const D m = checks::random_mask({2, 1, 5, 5}, rng);
    EXPECT_EQ(laplace_nll(mu, D::zeros(mu.shape()), hr, m).item(), masked_l1(mu, hr, m).item());
  }
}

TEST(PlainLosses, LaplaceValue) {
  const D mu = D::from({1, 1, 1, 2}, {1, 2}), hr = D::from({1, 1, 1, 2}, {3, 2});
  const D delta = D::from({1, 1, 1, 2}, {std::log(2.0), 0.5}), m = D::ones({1, 1, 1, 2});
  const double want = (std::log(2.0) + 0.5 * 2 + 0.5 + 0) / 2;
  EXPECT_NEAR(laplace_nll(mu, delta, hr, m).item(), want, 1e-15);
}

TEST(PlainLosses, BiasBrightnessIsTheMaskedMeanResidual) {
  const D mu = D::from({2, 1, 1, 3}, {1, 2, 3, 0, 0, 0}), hr = D::from({2, 1, 1, 3}, {2, 4, 100, 1, 2, 3});
  const D m = D::from({2, 1, 1, 3}, {1, 1, 0, 1, 1, 1});
  const D b = bias_brightness(mu, hr, m);
  EXPECT_DOUBLE_EQ(b.values()[0], 1.5);
  EXPECT_DOUBLE_EQ(b.values()[1], 2.0);
}

TEST(LossErrors, GeometryAndEmptyMasks) {
  EXPECT_THROW(l1_registered(D::zeros({1, 1, 12, 12}), D::zeros({1, 1, 10, 10}), D::ones({1, 1, 10, 10})), LossError);
  EXPECT_THROW(l1_registered(D::zeros({1, 1, 12, 12}), D::zeros({1, 1, 12, 12}), D::zeros({1, 1, 12, 12})), LossError);
  EXPECT_THROW(masked_l1(D::zeros({1, 1, 2, 2}), D::zeros({1, 1, 2, 2}), D::zeros({1, 1, 2, 2})), LossError);
  ShiftSearchConfig bad;
  bad.max_shift = -1;
  EXPECT_THROW(bad.validate(), LossError);
}
