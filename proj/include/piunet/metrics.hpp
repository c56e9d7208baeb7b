#pragma once

// Shift- and brightness-corrected image quality on 16-bit-scale intensities.
// Same window geometry as the registered losses: the SR image is cropped by
// `crop` pixels per side and compared against every HR window (u, v).

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "piunet/image.hpp"
#include "piunet/losses.hpp"

namespace piunet {

inline constexpr double kPeak16 = 65535.0;

struct CpsnrResult {
  double value = 0.0;  // dB; +inf when the corrected MSE is exactly zero
  std::int64_t u = 0, v = 0;
  double bias = 0.0;
  double mse = 0.0;
};

struct WindowStats {
  double count = 0.0, bias = 0.0, mse = 0.0;
};

/// Masked count, brightness bias and MSE for one HR window.
inline WindowStats window_mse(const ImageF& sr, const ImageF& hr, const Mask& mask, const ShiftGeometry& g,
                              std::int64_t u, std::int64_t v) {
  WindowStats s;
  double diff = 0.0;
  for (std::int64_t y = 0; y < g.out_h; ++y)
    for (std::int64_t x = 0; x < g.out_w; ++x) {
      const std::int64_t hi = g.hr_index(u, v, y, x);
      if (!mask.data[static_cast<std::size_t>(hi)]) continue;
      s.count += 1.0;
      diff += hr.data[static_cast<std::size_t>(hi)] - sr.data[static_cast<std::size_t>(g.sr_index(y, x))];
    }
  if (s.count == 0.0) return s;
  s.bias = diff / s.count;
  double se = 0.0;
  for (std::int64_t y = 0; y < g.out_h; ++y)
    for (std::int64_t x = 0; x < g.out_w; ++x) {
      const std::int64_t hi = g.hr_index(u, v, y, x);
      if (!mask.data[static_cast<std::size_t>(hi)]) continue;
      const double e = hr.data[static_cast<std::size_t>(hi)] -
                       (sr.data[static_cast<std::size_t>(g.sr_index(y, x))] + s.bias);
      se += e * e;
    }
  s.mse = se / s.count;
  return s;
}

inline double psnr_from_mse(double mse, double peak = kPeak16) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace detail {

inline ShiftGeometry metric_geometry(const ImageF& sr, const ImageF& hr, const Mask& mask,
                                     const ShiftSearchConfig& cfg, const char* op) {
  if (!hr.same_size(mask)) throw ShapeError(std::string(op) + ": HR and mask sizes differ");
  return ShiftGeometry::make(sr.height, sr.width, hr.height, hr.width, cfg);
}

}  // namespace detail

inline CpsnrResult cpsnr(const ImageF& sr, const ImageF& hr, const Mask& mask, const ShiftSearchConfig& cfg = {}) {
  const auto g = detail::metric_geometry(sr, hr, mask, cfg, "cpsnr");
  CpsnrResult best;
  bool found = false;
  for (std::int64_t u = 0; u <= cfg.max_shift; ++u)
    for (std::int64_t v = 0; v <= cfg.max_shift; ++v) {
      const WindowStats s = window_mse(sr, hr, mask, g, u, v);
      if (s.count == 0.0) continue;
      const double p = psnr_from_mse(s.mse);
      if (!found || p > best.value) {
        best = {p, u, v, s.bias, s.mse};
        found = true;
      }
    }
  if (!found) throw LossError("cpsnr: mask has no clear pixels in any window");
  return best;
}

/// Normalized 1-D Gaussian taps.
inline std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& x : w) x /= total;
  return w;
}

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
  double peak = kPeak16;
};

/// SSIM of two equally sized images over every full Gaussian window, averaged
/// over windows whose centre pixel is clear (all windows if none is).
inline double ssim_masked(const ImageF& a, const ImageF& b, const Mask& centre_mask, const SsimOptions& o = {}) {
  if (!a.same_size(b) || !a.same_size(centre_mask)) throw ShapeError("ssim: image sizes differ");
  if (a.height < o.window || a.width < o.window) {
    throw ShapeError("ssim: images smaller than the " + std::to_string(o.window) + "-pixel window");
  }
  const auto w = gaussian_taps(o.window, o.sigma);
  const double c1 = (o.k1 * o.peak) * (o.k1 * o.peak), c2 = (o.k2 * o.peak) * (o.k2 * o.peak);
  const int half = o.window / 2;
  double acc_clear = 0.0, acc_all = 0.0;
  std::int64_t n_clear = 0, n_all = 0;
  for (std::int64_t y = half; y + half < a.height; ++y)
    for (std::int64_t x = half; x + half < a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < o.window; ++dy)
        for (int dx = 0; dx < o.window; ++dx) {
          const double wt = w[static_cast<std::size_t>(dy)] * w[static_cast<std::size_t>(dx)];
          const double va = a.at(y + dy - half, x + dx - half), vb = b.at(y + dy - half, x + dx - half);
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      const double s = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      acc_all += s;
      ++n_all;
      if (centre_mask.at(y, x)) {
        acc_clear += s;
        ++n_clear;
      }
    }
  return n_clear > 0 ? acc_clear / static_cast<double>(n_clear) : acc_all / static_cast<double>(n_all);
}

/// SSIM at the shift and bias selected by cpsnr.
inline double cssim(const ImageF& sr, const ImageF& hr, const Mask& mask, const ShiftSearchConfig& cfg = {},
                    const SsimOptions& o = {}) {
  const auto g = detail::metric_geometry(sr, hr, mask, cfg, "cssim");
  const CpsnrResult c = cpsnr(sr, hr, mask, cfg);
  ImageF a = crop(sr, g.crop, g.crop, g.out_h, g.out_w);
  for (auto& x : a.data) x += c.bias;
  return ssim_masked(a, crop(hr, c.u, c.v, g.out_h, g.out_w), crop(mask, c.u, c.v, g.out_h, g.out_w), o);
}

inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct SceneScore {
  std::string scene;
  double cpsnr = 0.0, cssim = 0.0;
  std::int64_t u = 0, v = 0;
  double bias = 0.0;
};

/// Per-scene rows plus their mean. Infinite scores are skipped in the mean
/// and counted separately.
struct EvalReport {
  std::vector<SceneScore> rows;

  double mean_cpsnr() const { return mean_of(&SceneScore::cpsnr); }
  double mean_cssim() const { return mean_of(&SceneScore::cssim); }
  std::int64_t infinite_count() const {
    std::int64_t n = 0;
    for (const auto& r : rows) n += std::isinf(r.cpsnr) ? 1 : 0;
    return n;
  }

  std::string csv() const {
    std::ostringstream os;
    os << "scene,cpsnr,cssim,u,v,bias\n";
    for (const auto& r : rows) {
      os << r.scene << ',' << format_metric(r.cpsnr) << ',' << format_metric(r.cssim) << ',' << r.u << ','
         << r.v << ',' << format_metric(r.bias) << '\n';
    }
    return os.str();
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write report " + path);
    f << csv();
  }

 private:
  double mean_of(double SceneScore::*field) const {
    double acc = 0.0;
    std::int64_t n = 0;
    for (const auto& r : rows) {
      if (std::isinf(r.*field)) continue;
      acc += r.*field;
      ++n;
    }
    if (n == 0) return rows.empty() ? 0.0 : std::numeric_limits<double>::infinity();
    return acc / static_cast<double>(n);
  }
};

inline SceneScore score_scene(const std::string& id, const ImageF& sr, const ImageF& hr, const Mask& mask,
                              const ShiftSearchConfig& cfg = {}) {
  const CpsnrResult c = cpsnr(sr, hr, mask, cfg);
  return {id, c.value, cssim(sr, hr, mask, cfg), c.u, c.v, c.bias};
}

}  // namespace piunet
