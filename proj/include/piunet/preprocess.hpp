#pragma once

// Scene preparation: clearance filtering, frame selection, integer
// registration, normalization and patch extraction.

#include <numeric>

#include "piunet/dataset.hpp"

namespace piunet {

struct ClearanceResult {
  SceneRecord scene;
  std::vector<std::int64_t> kept;  // original frame indices
  bool skipped = false;            // fewer than t_min frames survived
};

/// Keeps frames whose occluded fraction is strictly below `threshold`.
inline ClearanceResult filter_clearance(const SceneRecord& s, double threshold = 0.15, std::int64_t t_min = 1) {
  ClearanceResult r;
  r.scene = s;
  r.scene.lr.clear();
  r.scene.qm.clear();
  for (std::size_t i = 0; i < s.lr.size(); ++i) {
    if (1.0 - clear_fraction(s.qm[i]) < threshold) {
      r.scene.lr.push_back(s.lr[i]);
      r.scene.qm.push_back(s.qm[i]);
      r.kept.push_back(static_cast<std::int64_t>(i));
    }
  }
  r.skipped = static_cast<std::int64_t>(r.kept.size()) < t_min;
  return r;
}

/// Frame order used by select_frames: clear fraction descending, index ascending.
inline std::vector<std::int64_t> clearest_first(const SceneRecord& s) {
  std::vector<double> frac;
  for (const auto& m : s.qm) frac.push_back(clear_fraction(m));
  std::vector<std::int64_t> order(s.lr.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return frac[static_cast<std::size_t>(a)] > frac[static_cast<std::size_t>(b)];
  });
  return order;
}

/// Exactly T frames: the T clearest, or all frames repeated cyclically in
/// clearest-first order when fewer are available.
inline SceneRecord select_frames(const SceneRecord& s, std::int64_t T, std::vector<std::int64_t>* picked = nullptr) {
  if (T < 1) throw DatasetError("select_frames: T must be positive");
  if (s.lr.empty()) throw DatasetError("select_frames: scene " + s.id + " has no frames");
  const auto order = clearest_first(s);
  SceneRecord out = s;
  out.lr.clear();
  out.qm.clear();
  if (picked) picked->clear();
  for (std::int64_t i = 0; i < T; ++i) {
    const auto idx = order[static_cast<std::size_t>(i % static_cast<std::int64_t>(order.size()))];
    out.lr.push_back(s.lr[static_cast<std::size_t>(idx)]);
    out.qm.push_back(s.qm[static_cast<std::size_t>(idx)]);
    if (picked) picked->push_back(idx);
  }
  return out;
}

struct Shift2 {
  std::int64_t dy = 0, dx = 0;
  bool operator==(const Shift2&) const = default;
};

/// shifted(y, x) = img(y - dy, x - dx); samples from outside are `fill`.
template <typename P>
Image<P> shift_image(const Image<P>& img, Shift2 s, P fill = P{}) {
  Image<P> out(img.height, img.width, fill);
  for (std::int64_t y = 0; y < img.height; ++y) {
    const std::int64_t sy = y - s.dy;
    if (sy < 0 || sy >= img.height) continue;
    for (std::int64_t x = 0; x < img.width; ++x) {
      const std::int64_t sx = x - s.dx;
      if (sx >= 0 && sx < img.width) out.at(y, x) = img.at(sy, sx);
    }
  }
  return out;
}

/// Zero-mean normalized cross-correlation between `ref` and `frame` shifted by
/// `s`, over pixels clear in both. Returns -inf with fewer than `min_overlap`
/// such pixels and 0 when either side is flat.
inline double masked_ncc(const ImageF& ref, const Mask& ref_mask, const ImageF& frame, const Mask& frame_mask,
                         Shift2 s, std::int64_t min_overlap = 16) {
  double n = 0, sr = 0, sf = 0;
  const auto each = [&](auto&& fn) {
    for (std::int64_t y = std::max<std::int64_t>(0, s.dy); y < std::min(ref.height, ref.height + s.dy); ++y)
      for (std::int64_t x = std::max<std::int64_t>(0, s.dx); x < std::min(ref.width, ref.width + s.dx); ++x) {
        if (!ref_mask.at(y, x) || !frame_mask.at(y - s.dy, x - s.dx)) continue;
        fn(ref.at(y, x), frame.at(y - s.dy, x - s.dx));
      }
  };
  each([&](double a, double b) {
    n += 1;
    sr += a;
    sf += b;
  });
  if (n < static_cast<double>(min_overlap)) return -std::numeric_limits<double>::infinity();
  const double mr = sr / n, mf = sf / n;
  double num = 0, vr = 0, vf = 0;
  each([&](double a, double b) {
    num += (a - mr) * (b - mf);
    vr += (a - mr) * (a - mr);
    vf += (b - mf) * (b - mf);
  });
  if (vr <= 0 || vf <= 0) return 0.0;
  return num / std::sqrt(vr * vf);
}

/// Candidate shifts in search order: by |dy| + |dx|, then dy, then dx. The
/// first candidate reaching the best score wins, so (0, 0) wins ties.
inline std::vector<Shift2> shift_candidates(std::int64_t d) {
  std::vector<Shift2> c;
  for (std::int64_t dy = -d; dy <= d; ++dy)
    for (std::int64_t dx = -d; dx <= d; ++dx) c.push_back({dy, dx});
  std::stable_sort(c.begin(), c.end(), [](Shift2 a, Shift2 b) {
    return std::abs(a.dy) + std::abs(a.dx) < std::abs(b.dy) + std::abs(b.dx);
  });
  return c;
}

inline Shift2 best_shift(const ImageF& ref, const Mask& ref_mask, const ImageF& frame, const Mask& frame_mask,
                         std::int64_t d) {
  Shift2 best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const Shift2 s : shift_candidates(d)) {
    const double score = masked_ncc(ref, ref_mask, frame, frame_mask, s);
    if (score > best_score) {
      best_score = score;
      best = s;
    }
  }
  return best;
}

struct RegistrationResult {
  SceneRecord scene;
  std::int64_t reference = 0;
  std::vector<Shift2> shifts;  // applied to each frame, see shift_image
};

/// Aligns every frame to the clearest one by integer translation. Pixels
/// shifted in from outside the frame are zero and marked occluded.
inline RegistrationResult register_translational(const SceneRecord& s, std::int64_t max_shift = 4) {
  if (s.lr.empty()) throw DatasetError("register_translational: scene " + s.id + " has no frames");
  RegistrationResult r;
  r.scene = s;
  r.reference = clearest_first(s).front();
  const auto ref = static_cast<std::size_t>(r.reference);
  for (std::size_t i = 0; i < s.lr.size(); ++i) {
    const Shift2 sh = i == ref ? Shift2{} : best_shift(s.lr[ref], s.qm[ref], s.lr[i], s.qm[i], max_shift);
    r.shifts.push_back(sh);
    r.scene.lr[i] = shift_image(s.lr[i], sh, 0.0);
    r.scene.qm[i] = shift_image(s.qm[i], sh, std::uint8_t{0});
  }
  return r;
}

struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;

  void validate() const {
    if (!(std > 0.0) || !std::isfinite(mean)) throw DatasetError("normalization: std must be positive");
  }
  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("norm.mean", mean);
    kv.set("norm.std", std);
    return kv;
  }
  static NormalizationStats from_kv(const KeyValues& kv) {
    NormalizationStats s{kv.require_number<double>("norm.mean"), kv.require_number<double>("norm.std")};
    s.validate();
    return s;
  }
};

/// Mean and population standard deviation of the clear LR pixels.
inline NormalizationStats compute_stats(const std::vector<SceneRecord>& scenes) {
  double n = 0, mean = 0, m2 = 0;
  for (const auto& s : scenes)
    for (std::size_t f = 0; f < s.lr.size(); ++f)
      for (std::size_t i = 0; i < s.lr[f].data.size(); ++i) {
        if (!s.qm[f].data[i]) continue;
        const double x = s.lr[f].data[i];
        n += 1;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
      }
  if (n < 2) throw DatasetError("compute_stats: not enough clear pixels");
  NormalizationStats st{mean, std::sqrt(m2 / n)};
  st.validate();
  return st;
}

inline ImageF normalize(const ImageF& img, const NormalizationStats& st) {
  ImageF out = img;
  for (auto& v : out.data) v = (v - st.mean) / st.std;
  return out;
}

inline ImageF denormalize(const ImageF& img, const NormalizationStats& st) {
  ImageF out = img;
  for (auto& v : out.data) v = v * st.std + st.mean;
  return out;
}

/// Aligned LR stack / HR training pair.
struct Patch {
  std::int64_t scene = 0;  // index into the source list
  std::int64_t y = 0, x = 0;  // LR top-left
  std::vector<ImageF> lr;
  std::vector<Mask> qm;
  ImageF hr;
  Mask sm;
};

/// All size x size LR windows whose corners lie on the stride grid, with the
/// matching (r size)^2 HR windows.
inline std::vector<Patch> extract_patches(const SceneRecord& s, std::int64_t scene_index, std::int64_t size,
                                          std::int64_t stride) {
  if (size < 1 || stride < 1) throw DatasetError("extract_patches: size and stride must be positive");
  if (!s.has_hr) throw DatasetError("extract_patches: scene " + s.id + " has no HR image");
  const std::int64_t r = s.scale();
  std::vector<Patch> out;
  for (std::int64_t y = 0; y + size <= s.lr_height(); y += stride)
    for (std::int64_t x = 0; x + size <= s.lr_width(); x += stride) {
      Patch p;
      p.scene = scene_index;
      p.y = y;
      p.x = x;
      for (std::size_t f = 0; f < s.lr.size(); ++f) {
        p.lr.push_back(crop(s.lr[f], y, x, size, size));
        p.qm.push_back(crop(s.qm[f], y, x, size, size));
      }
      p.hr = crop(s.hr, r * y, r * x, r * size, r * size);
      p.sm = crop(s.sm, r * y, r * x, r * size, r * size);
      out.push_back(std::move(p));
    }
  return out;
}

/// Rotates every image of the patch counterclockwise by k * 90 degrees.
inline Patch rotate_augment(const Patch& p, int k) {
  Patch out = p;
  for (auto& im : out.lr) im = rot90(im, k);
  for (auto& m : out.qm) m = rot90(m, k);
  out.hr = rot90(p.hr, k);
  out.sm = rot90(p.sm, k);
  return out;
}

struct PrepConfig {
  double clearance_threshold = 0.15;
  std::int64_t frames = 9;
  std::int64_t register_window = 4;

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("data.clearance_threshold", clearance_threshold);
    kv.set("data.frames", frames);
    kv.set("data.register_window", register_window);
    return kv;
  }
  static PrepConfig from_kv(const KeyValues& kv) { return from_kv(kv, PrepConfig()); }
  static PrepConfig from_kv(const KeyValues& kv, PrepConfig c) {
    c.clearance_threshold = kv.get_number("data.clearance_threshold", c.clearance_threshold);
    c.frames = kv.get_number("data.frames", c.frames);
    c.register_window = kv.get_number("data.register_window", c.register_window);
    return c;
  }
};

/// Filter, select, register. When no frame passes the clearance threshold the
/// clearest frames are used anyway and `degraded` is set.
struct PreparedScene {
  SceneRecord scene;
  bool degraded = false;
};

inline PreparedScene prepare_scene(const SceneRecord& s, const PrepConfig& c) {
  PreparedScene out;
  auto filtered = filter_clearance(s, c.clearance_threshold);
  const SceneRecord& base = filtered.skipped ? s : filtered.scene;
  out.degraded = filtered.skipped;
  out.scene = register_translational(select_frames(base, c.frames), c.register_window).scene;
  return out;
}

}  // namespace piunet
