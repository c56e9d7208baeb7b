#pragma once

// Sparsification curves: PSNR of the pixels that survive after removing a
// growing fraction ordered by predicted uncertainty, compared with random and
// true-error orderings. Shift and bias come from cpsnr on the full image and
// stay fixed; only clear pixels of the chosen HR window take part.

#include <random>

#include "piunet/metrics.hpp"

namespace piunet {

inline std::vector<double> default_fractions() {
  std::vector<double> f;
  for (int i = 0; i < 100; ++i) f.push_back(i / 100.0);
  return f;
}

/// Per-pixel residuals at the frozen shift and bias.
struct FrozenResiduals {
  CpsnrResult shift;
  std::vector<double> error;        // hr - (sr + b), clear pixels only
  std::vector<std::int64_t> pixel;  // index into the cropped SR image
};

inline FrozenResiduals frozen_residuals(const ImageF& sr, const ImageF& hr, const Mask& mask,
                                        const ShiftSearchConfig& cfg) {
  const auto g = ShiftGeometry::make(sr.height, sr.width, hr.height, hr.width, cfg);
  FrozenResiduals r;
  r.shift = cpsnr(sr, hr, mask, cfg);
  for (std::int64_t y = 0; y < g.out_h; ++y)
    for (std::int64_t x = 0; x < g.out_w; ++x) {
      const std::int64_t hi = g.hr_index(r.shift.u, r.shift.v, y, x);
      if (!mask.data[static_cast<std::size_t>(hi)]) continue;
      r.error.push_back(hr.data[static_cast<std::size_t>(hi)] -
                        (sr.data[static_cast<std::size_t>(g.sr_index(y, x))] + r.shift.bias));
      r.pixel.push_back(y * g.out_w + x);
    }
  return r;
}

/// PSNR after dropping the first floor(f N) candidates of `order` (positions
/// into the residual list); survivors are summed in pixel order.
inline std::vector<double> curve_for_order(const std::vector<double>& error, const std::vector<std::int64_t>& order,
                                           const std::vector<double>& fractions) {
  const auto n = static_cast<std::int64_t>(error.size());
  std::vector<double> out;
  std::vector<char> removed(error.size());
  for (double f : fractions) {
    if (f < 0 || f >= 1) throw Error("sparsification: fractions must lie in [0, 1)");
    const auto k = static_cast<std::int64_t>(std::floor(f * static_cast<double>(n) + 1e-9));
    std::fill(removed.begin(), removed.end(), 0);
    for (std::int64_t i = 0; i < k; ++i) removed[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
    double se = 0.0, cnt = 0.0;
    for (std::size_t i = 0; i < error.size(); ++i) {
      if (removed[i]) continue;
      se += error[i] * error[i];
      cnt += 1.0;
    }
    out.push_back(psnr_from_mse(se / cnt));
  }
  return out;
}

/// Positions sorted by `key` descending, ties by position.
inline std::vector<std::int64_t> descending_order(const std::vector<double>& key) {
  std::vector<std::int64_t> order(key.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return key[static_cast<std::size_t>(a)] > key[static_cast<std::size_t>(b)];
  });
  return order;
}

/// Model curve: pixels removed by decreasing delta.
inline std::vector<double> sparsification_curve(const ImageF& sr, const ImageF& delta, const ImageF& hr,
                                                const Mask& mask, const ShiftSearchConfig& cfg = {},
                                                const std::vector<double>& fractions = default_fractions()) {
  if (!sr.same_size(delta)) throw ShapeError("sparsification: SR and delta sizes differ");
  const FrozenResiduals r = frozen_residuals(sr, hr, mask, cfg);
  const auto g = ShiftGeometry::make(sr.height, sr.width, hr.height, hr.width, cfg);
  std::vector<double> key;
  for (auto p : r.pixel) key.push_back(delta.at(p / g.out_w + g.crop, p % g.out_w + g.crop));
  return curve_for_order(r.error, descending_order(key), fractions);
}

struct SparsificationCurves {
  std::vector<double> fractions;
  std::vector<double> model, random, oracle;

  /// Mean over fractions of (oracle - model) and (model - random).
  double oracle_gap() const { return mean_diff(oracle, model); }
  double random_gain() const { return mean_diff(model, random); }

  std::string csv() const {
    std::ostringstream os;
    os << "fraction,psnr_model,psnr_random,psnr_oracle\n";
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      os << format_metric(fractions[i]) << ',' << format_metric(model[i]) << ',' << format_metric(random[i]) << ','
         << format_metric(oracle[i]) << '\n';
    }
    return os.str();
  }

 private:
  static double mean_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] - b[i];
    return a.empty() ? 0.0 : acc / static_cast<double>(a.size());
  }
};

/// Model, random (mean of `random_seeds` shuffles) and oracle (true |error|) curves.
inline SparsificationCurves curve_baselines(const ImageF& sr, const ImageF& delta, const ImageF& hr, const Mask& mask,
                                            const ShiftSearchConfig& cfg = {},
                                            const std::vector<double>& fractions = default_fractions(),
                                            std::uint64_t seed = 0, int random_seeds = 10) {
  SparsificationCurves c;
  c.fractions = fractions;
  c.model = sparsification_curve(sr, delta, hr, mask, cfg, fractions);
  const FrozenResiduals r = frozen_residuals(sr, hr, mask, cfg);
  std::vector<double> abs_err;
  for (double e : r.error) abs_err.push_back(std::abs(e));
  c.oracle = curve_for_order(r.error, descending_order(abs_err), fractions);
  c.random.assign(fractions.size(), 0.0);
  for (int s = 0; s < random_seeds; ++s) {
    std::vector<std::int64_t> order(r.error.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(s));
    std::shuffle(order.begin(), order.end(), rng);
    const auto curve = curve_for_order(r.error, order, fractions);
    for (std::size_t i = 0; i < curve.size(); ++i) c.random[i] += curve[i] / random_seeds;
  }
  return c;
}

/// Fraction-wise mean of several scenes' curves.
inline SparsificationCurves average_curves(const std::vector<SparsificationCurves>& all) {
  if (all.empty()) throw Error("average_curves: nothing to average");
  SparsificationCurves out;
  out.fractions = all[0].fractions;
  const auto n = out.fractions.size();
  out.model.assign(n, 0.0);
  out.random.assign(n, 0.0);
  out.oracle.assign(n, 0.0);
  for (const auto& c : all)
    for (std::size_t i = 0; i < n; ++i) {
      out.model[i] += c.model[i] / static_cast<double>(all.size());
      out.random[i] += c.random[i] / static_cast<double>(all.size());
      out.oracle[i] += c.oracle[i] / static_cast<double>(all.size());
    }
  return out;
}

}  // namespace piunet
