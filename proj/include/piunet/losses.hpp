#pragma once

// Training losses on normalized values. Images are [B, 1, H, W] tensors,
// masks hold 1 for clear pixels and 0 otherwise.
//
// The registered losses compare the SR image, cropped by `crop` pixels per
// side, with every HR window at offset (u, v) in [0, max_shift]^2 (u = row
// offset, v = column offset). Inside a window the SR image is first corrected
// by the masked mean brightness difference b, then scored:
//
//   b_j     = sum_i m (hr - mu) / sum_i m            per image j
//   L_{u,v} = sum_j sum_i m (delta + exp(-delta) |hr - (mu + b_j)|) / sum_j sum_i m
//
// Sums run in row-major order, images in batch order. The returned loss is the
// smallest L_{u,v}; ties go to the smallest (u, v) in lexicographic order, and
// gradients flow through that window only.

#include <limits>

#include "piunet/ops.hpp"

namespace piunet {

class LossError : public Error {
 public:
  using Error::Error;
};

enum class ShiftReduction {
  kBatch,     // one (u, v) for the whole batch
  kPerImage,  // each image picks its own window; the loss is the batch mean
};

struct ShiftSearchConfig {
  std::int64_t max_shift = 6;
  std::int64_t crop = 3;
  ShiftReduction reduction = ShiftReduction::kBatch;

  void validate() const {
    if (max_shift < 0 || crop < 0) throw LossError("shift search: max_shift and crop must be non-negative");
  }
};

/// Window geometry shared by the losses and the metrics.
struct ShiftGeometry {
  std::int64_t sr_h, sr_w;  // full SR size
  std::int64_t hr_h, hr_w;
  std::int64_t out_h, out_w;  // compared region
  std::int64_t crop, max_shift;

  static ShiftGeometry make(std::int64_t sr_h, std::int64_t sr_w, std::int64_t hr_h, std::int64_t hr_w,
                            const ShiftSearchConfig& cfg) {
    cfg.validate();
    ShiftGeometry g{sr_h, sr_w, hr_h, hr_w, sr_h - 2 * cfg.crop, sr_w - 2 * cfg.crop, cfg.crop, cfg.max_shift};
    if (g.out_h < 1 || g.out_w < 1 || g.out_h + cfg.max_shift != hr_h || g.out_w + cfg.max_shift != hr_w) {
      throw LossError("shift search: SR " + std::to_string(sr_h) + "x" + std::to_string(sr_w) + " cropped by " +
                      std::to_string(cfg.crop) + " does not fit HR " + std::to_string(hr_h) + "x" +
                      std::to_string(hr_w) + " with shifts up to " + std::to_string(cfg.max_shift));
    }
    return g;
  }
  std::int64_t sr_index(std::int64_t y, std::int64_t x) const { return (y + crop) * sr_w + x + crop; }
  std::int64_t hr_index(std::int64_t u, std::int64_t v, std::int64_t y, std::int64_t x) const {
    return (y + u) * hr_w + x + v;
  }
};

namespace detail {

template <typename T>
void require_image_batch(const Tensor<T>& t, const char* op, const char* what) {
  if (t.rank() != 4 || t.dim(1) != 1) {
    throw ShapeError(std::string(op) + ": " + what + " must be [B,1,H,W], got " + shape_str(t.shape()));
  }
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
}

}  // namespace detail

/// Masked mean of delta + exp(-delta) |hr - mu| over all clear pixels.
template <typename T>
Tensor<T> laplace_nll(const Tensor<T>& mu, const Tensor<T>& delta, const Tensor<T>& hr, const Tensor<T>& mask) {
  detail::require_same(mu, delta, "laplace_nll");
  detail::require_same(mu, hr, "laplace_nll");
  detail::require_same(mu, mask, "laplace_nll");
  T count = T(0);
  for (T m : mask.values()) count += m;
  if (count <= T(0)) throw LossError("laplace_nll: mask has no clear pixels");
  Tensor<T> term = add(delta, mul(exp(neg(delta)), abs(sub(hr, mu))));
  return div(sum(mul(term, mask)), Tensor<T>::scalar(count));
}

/// Masked mean absolute error.
template <typename T>
Tensor<T> masked_l1(const Tensor<T>& mu, const Tensor<T>& hr, const Tensor<T>& mask) {
  detail::require_same(mu, hr, "masked_l1");
  detail::require_same(mu, mask, "masked_l1");
  T count = T(0);
  for (T m : mask.values()) count += m;
  if (count <= T(0)) throw LossError("masked_l1: mask has no clear pixels");
  return div(sum(mul(abs(sub(hr, mu)), mask)), Tensor<T>::scalar(count));
}

/// Per-image brightness correction b (shape [B]): adding b to mu zeroes the
/// masked mean residual of each image.
template <typename T>
Tensor<T> bias_brightness(const Tensor<T>& mu, const Tensor<T>& hr, const Tensor<T>& mask) {
  detail::require_same(mu, hr, "bias_brightness");
  detail::require_same(mu, mask, "bias_brightness");
  if (mu.rank() < 1) throw ShapeError("bias_brightness: need a batch axis");
  std::vector<std::int64_t> axes;
  for (std::int64_t a = 1; a < mu.rank(); ++a) axes.push_back(a);
  Tensor<T> counts = sum_over_axes(mask, axes);
  for (T c : counts.values()) {
    if (c <= T(0)) throw LossError("bias_brightness: an image has no clear pixels");
  }
  return div(sum_over_axes(mul(sub(hr, mu), mask), axes), counts.detach());
}

struct ShiftChoice {
  std::int64_t u = 0, v = 0;
};

template <typename T>
struct RegisteredLoss {
  Tensor<T> loss;
  std::vector<ShiftChoice> shifts;  // one entry, or one per image for kPerImage
  std::vector<double> window_losses;  // (max_shift+1)^2 values for kBatch, row-major in (u, v)
};

namespace detail {

// Per-image sums for one window: masked count, b, and the masked sum of the
// per-pixel term. `delta` may be null (L1).
template <typename T>
struct WindowSums {
  T count, bias, total;
};

template <typename T>
WindowSums<T> window_sums(const T* mu, const T* delta, const T* hr, const T* mask, const ShiftGeometry& g,
                          std::int64_t u, std::int64_t v) {
  T count = T(0), diff = T(0);
  for (std::int64_t y = 0; y < g.out_h; ++y)
    for (std::int64_t x = 0; x < g.out_w; ++x) {
      const std::int64_t hi = g.hr_index(u, v, y, x);
      const T m = mask[hi];
      count += m;
      diff += m * (hr[hi] - mu[g.sr_index(y, x)]);
    }
  WindowSums<T> s{count, T(0), T(0)};
  if (count <= T(0)) return s;
  s.bias = diff / count;
  for (std::int64_t y = 0; y < g.out_h; ++y)
    for (std::int64_t x = 0; x < g.out_w; ++x) {
      const std::int64_t hi = g.hr_index(u, v, y, x), si = g.sr_index(y, x);
      const T r = std::abs(hr[hi] - (mu[si] + s.bias));
      const T term = delta ? delta[si] + std::exp(-delta[si]) * r : r;
      s.total += mask[hi] * term;
    }
  return s;
}

// Adds d(scale * sum_i m term)/d(mu, delta) for one image and window, with b
// treated as a function of mu.
template <typename T>
void window_backward(const T* mu, const T* delta, const T* hr, const T* mask, const ShiftGeometry& g,
                     std::int64_t u, std::int64_t v, const WindowSums<T>& s, T scale, T* dmu, T* ddelta) {
  T db = T(0);
  for (std::int64_t y = 0; y < g.out_h; ++y)
    for (std::int64_t x = 0; x < g.out_w; ++x) {
      const std::int64_t hi = g.hr_index(u, v, y, x), si = g.sr_index(y, x);
      const T m = mask[hi];
      if (m == T(0)) continue;
      const T r = hr[hi] - (mu[si] + s.bias);
      const T w = delta ? std::exp(-delta[si]) : T(1);
      const T sgn = r > T(0) ? T(1) : (r < T(0) ? T(-1) : T(0));
      // d|r|/dmu = -sgn, d|r|/db = -sgn
      const T gmu = -scale * m * w * sgn;
      if (dmu) dmu[si] += gmu;
      db += gmu;
      if (delta && ddelta) ddelta[si] += scale * m * (T(1) - w * std::abs(r));
    }
  // db/dmu_i = -m_i / count
  if (dmu) {
    for (std::int64_t y = 0; y < g.out_h; ++y)
      for (std::int64_t x = 0; x < g.out_w; ++x) {
        const T m = mask[g.hr_index(u, v, y, x)];
        if (m != T(0)) dmu[g.sr_index(y, x)] -= db * m / s.count;
      }
  }
}

template <typename T>
RegisteredLoss<T> registered_impl(const char* op, const Tensor<T>& mu, const Tensor<T>* delta, const Tensor<T>& hr,
                                  const Tensor<T>& mask, const ShiftSearchConfig& cfg) {
  require_image_batch(mu, op, "SR mean");
  require_image_batch(hr, op, "HR");
  require_same(hr, mask, op);
  if (delta) require_same(mu, *delta, op);
  if (mu.dim(0) != hr.dim(0)) throw ShapeError(std::string(op) + ": batch sizes differ");
  const auto g = ShiftGeometry::make(mu.dim(2), mu.dim(3), hr.dim(2), hr.dim(3), cfg);
  const std::int64_t B = mu.dim(0), S = cfg.max_shift + 1;
  const std::int64_t sr_n = g.sr_h * g.sr_w, hr_n = g.hr_h * g.hr_w;
  const T* mup = mu.vec().data();
  const T* dp = delta ? delta->vec().data() : nullptr;
  const T* hp = hr.vec().data();
  const T* mp = mask.vec().data();

  // sums[(u*S + v)*B + j]
  std::vector<WindowSums<T>> sums(static_cast<std::size_t>(S * S * B));
  for (std::int64_t u = 0; u < S; ++u)
    for (std::int64_t v = 0; v < S; ++v)
      for (std::int64_t j = 0; j < B; ++j)
        sums[static_cast<std::size_t>((u * S + v) * B + j)] =
            window_sums(mup + j * sr_n, dp ? dp + j * sr_n : nullptr, hp + j * hr_n, mp + j * hr_n, g, u, v);

  RegisteredLoss<T> res;
  T value = T(0);
  // chosen[j] = window index used for image j
  std::vector<std::int64_t> chosen(static_cast<std::size_t>(B));
  std::vector<T> scales(static_cast<std::size_t>(B));
  const auto at = [&](std::int64_t w, std::int64_t j) -> const WindowSums<T>& {
    return sums[static_cast<std::size_t>(w * B + j)];
  };
  if (cfg.reduction == ShiftReduction::kBatch) {
    std::int64_t best = -1;
    T best_value = std::numeric_limits<T>::infinity();
    T best_count = T(0);
    for (std::int64_t w = 0; w < S * S; ++w) {
      T count = T(0), total = T(0);
      bool ok = true;
      for (std::int64_t j = 0; j < B; ++j) {
        ok = ok && at(w, j).count > T(0);
        count += at(w, j).count;
        total += at(w, j).total;
      }
      const T lw = ok ? total / count : std::numeric_limits<T>::infinity();
      res.window_losses.push_back(static_cast<double>(lw));
      if (ok && lw < best_value) {
        best = w;
        best_value = lw;
        best_count = count;
      }
    }
    if (best < 0) throw LossError(std::string(op) + ": every shift window leaves an image without clear pixels");
    value = best_value;
    res.shifts.push_back({best / S, best % S});
    std::fill(chosen.begin(), chosen.end(), best);
    std::fill(scales.begin(), scales.end(), T(1) / best_count);
  } else {
    T acc = T(0);
    for (std::int64_t j = 0; j < B; ++j) {
      std::int64_t best = -1;
      T best_value = std::numeric_limits<T>::infinity();
      for (std::int64_t w = 0; w < S * S; ++w) {
        if (at(w, j).count <= T(0)) continue;
        const T lw = at(w, j).total / at(w, j).count;
        if (lw < best_value) {
          best = w;
          best_value = lw;
        }
      }
      if (best < 0) throw LossError(std::string(op) + ": image " + std::to_string(j) + " has no clear pixels");
      acc += best_value;
      chosen[static_cast<std::size_t>(j)] = best;
      scales[static_cast<std::size_t>(j)] = T(1) / (at(best, j).count * static_cast<T>(B));
      res.shifts.push_back({best / S, best % S});
    }
    value = acc / static_cast<T>(B);
  }

  std::vector<std::shared_ptr<Node<T>>> parents{mu.node_ptr()};
  if (delta) parents.push_back(delta->node_ptr());
  std::vector<WindowSums<T>> used;
  for (std::int64_t j = 0; j < B; ++j) used.push_back(at(chosen[static_cast<std::size_t>(j)], j));
  res.loss = make_result<T>(
      op, {}, {value}, std::move(parents),
      [=, hr_v = hr.vec(), mask_v = mask.vec()](Node<T>& self) {
        auto& pm = self.parents[0];
        const bool has_delta = self.parents.size() > 1;
        const T* dvals = has_delta ? self.parents[1]->value.data() : nullptr;
        T* dmu = pm->requires_grad ? pm->grad_buffer().data() : nullptr;
        T* ddelta = has_delta && self.parents[1]->requires_grad ? self.parents[1]->grad_buffer().data() : nullptr;
        const T gout = self.grad[0];
        for (std::int64_t j = 0; j < B; ++j) {
          const std::int64_t w = chosen[static_cast<std::size_t>(j)];
          window_backward(pm->value.data() + j * sr_n, dvals ? dvals + j * sr_n : nullptr, hr_v.data() + j * hr_n,
                          mask_v.data() + j * hr_n, g, w / S, w % S, used[static_cast<std::size_t>(j)],
                          gout * scales[static_cast<std::size_t>(j)], dmu ? dmu + j * sr_n : nullptr,
                          ddelta ? ddelta + j * sr_n : nullptr);
        }
      });
  return res;
}

}  // namespace detail

/// Shift- and brightness-insensitive Laplacian NLL, with the chosen windows.
template <typename T>
RegisteredLoss<T> registered_nll_search(const Tensor<T>& mu, const Tensor<T>& delta, const Tensor<T>& hr,
                                        const Tensor<T>& mask, const ShiftSearchConfig& cfg = {}) {
  return detail::registered_impl("registered_nll", mu, &delta, hr, mask, cfg);
}

template <typename T>
Tensor<T> registered_nll(const Tensor<T>& mu, const Tensor<T>& delta, const Tensor<T>& hr, const Tensor<T>& mask,
                         const ShiftSearchConfig& cfg = {}) {
  return registered_nll_search(mu, delta, hr, mask, cfg).loss;
}

/// Same search with the per-pixel term |hr - mu| (delta fixed at 0).
template <typename T>
RegisteredLoss<T> l1_registered_search(const Tensor<T>& mu, const Tensor<T>& hr, const Tensor<T>& mask,
                                       const ShiftSearchConfig& cfg = {}) {
  return detail::registered_impl("l1_registered", mu, static_cast<const Tensor<T>*>(nullptr), hr, mask, cfg);
}

template <typename T>
Tensor<T> l1_registered(const Tensor<T>& mu, const Tensor<T>& hr, const Tensor<T>& mask,
                        const ShiftSearchConfig& cfg = {}) {
  return l1_registered_search(mu, hr, mask, cfg).loss;
}

}  // namespace piunet
