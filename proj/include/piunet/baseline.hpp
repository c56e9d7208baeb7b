#pragma once

// Classical reference: bicubic upsampling of each registered frame followed
// by a masked temporal mean.

#include "piunet/dataset.hpp"

namespace piunet {

/// Keys cubic convolution weight, a = -0.5 gives Catmull-Rom.
inline double cubic_weight(double t, double a = -0.5) {
  t = std::abs(t);
  if (t <= 1) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < 2) return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a;
  return 0.0;
}

/// Half-pixel aligned bicubic resize by integer factor r, edges clamped.
inline ImageF bicubic_upsample(const ImageF& in, std::int64_t r) {
  if (r < 1) throw ShapeError("bicubic_upsample: factor must be >= 1");
  struct Taps {
    std::int64_t idx[4];
    double w[4];
  };
  const auto taps_for = [r](std::int64_t n_out, std::int64_t n_in) {
    std::vector<Taps> taps(static_cast<std::size_t>(n_out));
    for (std::int64_t o = 0; o < n_out; ++o) {
      const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(r) - 0.5;
      const auto i0 = static_cast<std::int64_t>(std::floor(src));
      const double frac = src - static_cast<double>(i0);
      auto& t = taps[static_cast<std::size_t>(o)];
      for (int k = 0; k < 4; ++k) {
        t.idx[k] = std::clamp<std::int64_t>(i0 - 1 + k, 0, n_in - 1);
        t.w[k] = cubic_weight(frac - (k - 1));
      }
    }
    return taps;
  };
  const auto ty = taps_for(in.height * r, in.height), tx = taps_for(in.width * r, in.width);
  ImageF rows(in.height, in.width * r);
  for (std::int64_t y = 0; y < in.height; ++y)
    for (std::int64_t x = 0; x < rows.width; ++x) {
      const auto& t = tx[static_cast<std::size_t>(x)];
      double acc = 0;
      for (int k = 0; k < 4; ++k) acc += t.w[k] * in.at(y, t.idx[k]);
      rows.at(y, x) = acc;
    }
  ImageF out(in.height * r, in.width * r);
  for (std::int64_t y = 0; y < out.height; ++y) {
    const auto& t = ty[static_cast<std::size_t>(y)];
    for (std::int64_t x = 0; x < out.width; ++x) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) acc += t.w[k] * rows.at(t.idx[k], x);
      out.at(y, x) = acc;
    }
  }
  return out;
}

/// Nearest-neighbour mask expansion: HR pixel (Y, X) takes LR pixel (Y/r, X/r).
inline Mask upsample_mask(const Mask& m, std::int64_t r) {
  Mask out(m.height * r, m.width * r);
  for (std::int64_t y = 0; y < out.height; ++y)
    for (std::int64_t x = 0; x < out.width; ++x) out.at(y, x) = m.at(y / r, x / r);
  return out;
}

/// Per-pixel mean over the frames clear at that pixel; pixels occluded in
/// every frame use the plain mean over all frames. Expects registered frames.
inline ImageF bicubic_average(const SceneRecord& s, std::int64_t r = 3) {
  if (s.lr.empty()) throw DatasetError("bicubic_average: scene " + s.id + " has no frames");
  if (s.qm.size() != s.lr.size()) throw MissingMaskError("bicubic_average: scene " + s.id + " lacks masks");
  std::vector<ImageF> up;
  std::vector<Mask> masks;
  for (std::size_t i = 0; i < s.lr.size(); ++i) {
    up.push_back(bicubic_upsample(s.lr[i], r));
    masks.push_back(upsample_mask(s.qm[i], r));
  }
  ImageF out(up[0].height, up[0].width);
  for (std::int64_t p = 0; p < out.size(); ++p) {
    const auto i = static_cast<std::size_t>(p);
    double acc = 0, all = 0, n = 0;
    for (std::size_t f = 0; f < up.size(); ++f) {
      all += up[f].data[i];
      if (masks[f].data[i]) {
        acc += up[f].data[i];
        n += 1;
      }
    }
    out.data[i] = n > 0 ? acc / n : all / static_cast<double>(up.size());
  }
  return out;
}

}  // namespace piunet
