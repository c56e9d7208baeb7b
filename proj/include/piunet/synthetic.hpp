#pragma once

// Procedural multitemporal scenes.
//
// The HR content is a continuous function (smooth random waves, a linear
// gradient and a few flat polygons) sampled at HR pixel centres. Each LR
// frame samples the same function at a subpixel offset, optionally with a
// local content change, then: Gaussian blur -> r x r area mean -> brightness
// offset -> Gaussian noise -> rounding to 16 bits. Occlusions are the top
// quantile of a smooth random field: those pixels turn bright and are
// marked not clear.

#include <random>

#include "piunet/dataset.hpp"

namespace piunet {

struct SyntheticConfig {
  std::int64_t scenes = 16;
  std::int64_t frames = 9;
  std::int64_t lr_size = 32;
  std::int64_t scale = 3;
  double shift_range = 1.5;        // max |offset| per axis, HR pixels
  double blur_sigma = 1.0;         // HR pixels; 0 disables
  double noise_sigma = 40.0;       // 16-bit units
  double brightness_offset = 150;  // max |offset| per frame
  double occlusion_rate = 0.05;    // expected occluded fraction per frame
  double change_rate = 0.0;        // probability of a content change per frame
  double base_level = 6000;
  double contrast = 2500;
  std::string band = "synthetic";

  void validate() const {
    if (scenes < 0 || frames < 1 || lr_size < 4 || scale < 1) {
      throw ConfigError("generator: need scenes >= 0, frames >= 1, lr_size >= 4, scale >= 1");
    }
    if (shift_range < 0 || blur_sigma < 0 || noise_sigma < 0 || brightness_offset < 0) {
      throw ConfigError("generator: shift, blur, noise and brightness ranges must be non-negative");
    }
    if (occlusion_rate < 0 || occlusion_rate > 0.5) throw ConfigError("generator: occlusion_rate must be in [0, 0.5]");
    if (change_rate < 0 || change_rate > 1) throw ConfigError("generator: change_rate must be in [0, 1]");
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("gen.scenes", scenes);
    kv.set("gen.frames", frames);
    kv.set("gen.lr_size", lr_size);
    kv.set("gen.scale", scale);
    kv.set("gen.shift_range", shift_range);
    kv.set("gen.blur_sigma", blur_sigma);
    kv.set("gen.noise_sigma", noise_sigma);
    kv.set("gen.brightness_offset", brightness_offset);
    kv.set("gen.occlusion_rate", occlusion_rate);
    kv.set("gen.change_rate", change_rate);
    kv.set("gen.base_level", base_level);
    kv.set("gen.contrast", contrast);
    kv.set("gen.band", band);
    return kv;
  }

  static SyntheticConfig from_kv(const KeyValues& kv) { return from_kv(kv, SyntheticConfig()); }
  static SyntheticConfig from_kv(const KeyValues& kv, SyntheticConfig c) {
    c.scenes = kv.get_number("gen.scenes", c.scenes);
    c.frames = kv.get_number("gen.frames", c.frames);
    c.lr_size = kv.get_number("gen.lr_size", c.lr_size);
    c.scale = kv.get_number("gen.scale", c.scale);
    c.shift_range = kv.get_number("gen.shift_range", c.shift_range);
    c.blur_sigma = kv.get_number("gen.blur_sigma", c.blur_sigma);
    c.noise_sigma = kv.get_number("gen.noise_sigma", c.noise_sigma);
    c.brightness_offset = kv.get_number("gen.brightness_offset", c.brightness_offset);
    c.occlusion_rate = kv.get_number("gen.occlusion_rate", c.occlusion_rate);
    c.change_rate = kv.get_number("gen.change_rate", c.change_rate);
    c.base_level = kv.get_number("gen.base_level", c.base_level);
    c.contrast = kv.get_number("gen.contrast", c.contrast);
    c.band = kv.get("gen.band", c.band);
    return c;
  }
};

namespace detail {

struct Wave {
  double ky, kx, phase, amp;
};

struct Polygon {
  std::vector<double> ys, xs;  // convex, counterclockwise
  double level;

  bool contains(double y, double x) const {
    const std::size_t n = ys.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = (i + 1) % n;
      const double cross = (xs[j] - xs[i]) * (y - ys[i]) - (ys[j] - ys[i]) * (x - xs[i]);
      if (cross < 0) return false;
    }
    return true;
  }
};

struct Change {
  double y0, x0, y1, x1, delta;
};

class Content {
 public:
  Content(std::mt19937_64& rng, double extent, const SyntheticConfig& c) : base_(c.base_level) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double two_pi = 6.283185307179586;
    for (int i = 0; i < 24; ++i) {
      // frequencies up to 0.2 cycles per HR pixel, amplitude falling with frequency
      const double f = 0.01 + 0.19 * u01(rng) * u01(rng);
      const double th = two_pi * u01(rng);
      waves_.push_back({two_pi * f * std::sin(th), two_pi * f * std::cos(th), two_pi * u01(rng),
                        c.contrast * 0.25 * (0.3 + u01(rng)) * (0.02 / (f + 0.02))});
    }
    gy_ = (u01(rng) - 0.5) * c.contrast / extent;
    gx_ = (u01(rng) - 0.5) * c.contrast / extent;
    std::uniform_int_distribution<int> npoly(2, 5), nvert(3, 7);
    const int np = npoly(rng);
    for (int p = 0; p < np; ++p) {
      Polygon poly;
      const double cy = extent * u01(rng), cx = extent * u01(rng);
      const double rad = extent * (0.06 + 0.14 * u01(rng));
      const int nv = nvert(rng);
      std::vector<double> angles;
      for (int v = 0; v < nv; ++v) angles.push_back(two_pi * u01(rng));
      std::sort(angles.begin(), angles.end());
      for (double a : angles) {
        // counterclockwise in (y down, x right) coordinates
        poly.ys.push_back(cy - rad * std::sin(a));
        poly.xs.push_back(cx + rad * std::cos(a));
      }
      std::reverse(poly.ys.begin(), poly.ys.end());
      std::reverse(poly.xs.begin(), poly.xs.end());
      poly.level = (u01(rng) - 0.5) * 1.6 * c.contrast;
      polys_.push_back(std::move(poly));
    }
  }

  double operator()(double y, double x, const std::vector<Change>& changes = {}) const {
    double v = base_ + gy_ * y + gx_ * x;
    for (const auto& w : waves_) v += w.amp * std::cos(w.ky * y + w.kx * x + w.phase);
    for (const auto& p : polys_)
      if (p.contains(y, x)) v += p.level;
    for (const auto& ch : changes)
      if (y >= ch.y0 && y < ch.y1 && x >= ch.x0 && x < ch.x1) v += ch.delta;
    return v;
  }

 private:
  double base_;
  double gy_ = 0, gx_ = 0;
  std::vector<Wave> waves_;
  std::vector<Polygon> polys_;
};

inline std::vector<double> gaussian_kernel(double sigma) {
  const int rad = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * rad + 1));
  double total = 0;
  for (int i = -rad; i <= rad; ++i) {
    k[static_cast<std::size_t>(i + rad)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[static_cast<std::size_t>(i + rad)];
  }
  for (auto& v : k) v /= total;
  return k;
}

/// Separable blur of an image carrying `rad` extra pixels on each side;
/// returns the interior.
inline ImageF blur_interior(const ImageF& in, const std::vector<double>& k) {
  const std::int64_t rad = static_cast<std::int64_t>(k.size() / 2);
  const std::int64_t h = in.height - 2 * rad, w = in.width - 2 * rad;
  ImageF tmp(in.height, w);
  for (std::int64_t y = 0; y < in.height; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(k.size()); ++i) acc += k[static_cast<std::size_t>(i)] * in.at(y, x + i);
      tmp.at(y, x) = acc;
    }
  ImageF out(h, w);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(k.size()); ++i) acc += k[static_cast<std::size_t>(i)] * tmp.at(y + i, x);
      out.at(y, x) = acc;
    }
  return out;
}

}  // namespace detail

/// Mean over non-overlapping r x r blocks.
inline ImageF area_downsample(const ImageF& in, std::int64_t r) {
  if (in.height % r != 0 || in.width % r != 0) throw ShapeError("area_downsample: size not divisible by factor");
  ImageF out(in.height / r, in.width / r);
  for (std::int64_t y = 0; y < out.height; ++y)
    for (std::int64_t x = 0; x < out.width; ++x) {
      double acc = 0;
      for (std::int64_t dy = 0; dy < r; ++dy)
        for (std::int64_t dx = 0; dx < r; ++dx) acc += in.at(r * y + dy, r * x + dx);
      out.at(y, x) = acc / static_cast<double>(r * r);
    }
  return out;
}

inline double round16(double v) { return std::clamp(std::round(v), 0.0, 65535.0); }

/// Marks the `fraction` of pixels with the largest field values as occluded
/// (ties by index).
inline Mask occlusion_mask(const ImageF& field, double fraction) {
  Mask m(field.height, field.width, 1);
  const auto n = static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(field.size())));
  if (n <= 0) return m;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(field.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
    return field.data[static_cast<std::size_t>(a)] > field.data[static_cast<std::size_t>(b)];
  });
  for (std::int64_t i = 0; i < n; ++i) m.data[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 0;
  return m;
}

inline std::string scene_id(std::int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "imgset%04lld", static_cast<long long>(i));
  return buf;
}

inline SceneRecord generate_scene(const SyntheticConfig& c, std::uint64_t seed, std::int64_t index) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(index) * 0xBF58476D1CE4E5B9ULL + 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::int64_t r = c.scale, n_lr = c.lr_size, n_hr = n_lr * r;
  const detail::Content content(rng, static_cast<double>(n_hr), c);

  SceneRecord s;
  s.id = scene_id(index);
  s.band = c.band;
  s.has_hr = true;
  s.hr = ImageF(n_hr, n_hr);
  s.sm = Mask(n_hr, n_hr, 1);
  for (std::int64_t y = 0; y < n_hr; ++y)
    for (std::int64_t x = 0; x < n_hr; ++x) s.hr.at(y, x) = round16(content(y + 0.5, x + 0.5));

  const auto kernel = c.blur_sigma > 0 ? detail::gaussian_kernel(c.blur_sigma) : std::vector<double>{1.0};
  const std::int64_t rad = static_cast<std::int64_t>(kernel.size() / 2);
  const double two_pi = 6.283185307179586;
  for (std::int64_t t = 0; t < c.frames; ++t) {
    const double sy = c.shift_range * (2 * u01(rng) - 1), sx = c.shift_range * (2 * u01(rng) - 1);
    std::vector<detail::Change> changes;
    if (u01(rng) < c.change_rate) {
      const double side = n_hr * (0.2 + 0.2 * u01(rng));
      const double y0 = (n_hr - side) * u01(rng), x0 = (n_hr - side) * u01(rng);
      const double mag = c.contrast * (0.4 + 0.6 * u01(rng)) * (u01(rng) < 0.5 ? -1 : 1);
      changes.push_back({y0, x0, y0 + side, x0 + side, mag});
    }
    ImageF hi(n_hr + 2 * rad, n_hr + 2 * rad);
    for (std::int64_t y = 0; y < hi.height; ++y)
      for (std::int64_t x = 0; x < hi.width; ++x) {
        const double v = content(y - rad + 0.5 + sy, x - rad + 0.5 + sx, changes);
        // unshifted, unblurred frames reproduce the stored HR exactly
        hi.at(y, x) = c.shift_range == 0 && c.blur_sigma == 0 ? round16(v) : v;
      }
    ImageF lr = area_downsample(c.blur_sigma > 0 ? detail::blur_interior(hi, kernel) : hi, r);
    const double offset = c.brightness_offset * (2 * u01(rng) - 1);

    // smooth occlusion field at LR resolution
    const double coverage = c.occlusion_rate * 2 * u01(rng);
    ImageF field(n_lr, n_lr);
    std::vector<detail::Wave> waves;
    for (int i = 0; i < 4; ++i) {
      const double f = 0.02 + 0.06 * u01(rng), th = two_pi * u01(rng);
      waves.push_back({two_pi * f * std::sin(th), two_pi * f * std::cos(th), two_pi * u01(rng), 1.0});
    }
    for (std::int64_t y = 0; y < n_lr; ++y)
      for (std::int64_t x = 0; x < n_lr; ++x) {
        double v = 0;
        for (const auto& w : waves) v += std::cos(w.ky * y + w.kx * x + w.phase);
        field.at(y, x) = v;
      }
    Mask qm = occlusion_mask(field, coverage);
    const double cloud = c.base_level + 2.5 * c.contrast;
    for (std::int64_t i = 0; i < lr.size(); ++i) {
      auto& v = lr.data[static_cast<std::size_t>(i)];
      const double noise = c.noise_sigma > 0 ? c.noise_sigma * gauss(rng) : 0.0;
      if (!qm.data[static_cast<std::size_t>(i)]) v = cloud + 0.1 * c.contrast * field.data[static_cast<std::size_t>(i)];
      v = round16(v + offset + noise);
    }
    s.lr.push_back(std::move(lr));
    s.qm.push_back(std::move(qm));
  }
  return s;
}

inline std::vector<SceneRecord> generate_synthetic(const SyntheticConfig& c, std::uint64_t seed) {
  c.validate();
  std::vector<SceneRecord> out;
  for (std::int64_t i = 0; i < c.scenes; ++i) out.push_back(generate_scene(c, seed, i));
  return out;
}

}  // namespace piunet
