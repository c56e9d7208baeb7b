#pragma once

// Operations on temporal feature maps [B, T, F, H, W]. A temporal permutation
// reindexes axis 1 only; every op here either commutes with it (equivariant)
// or removes it (temporal_mean, invariant).

#include <cmath>

#include "piunet/conv.hpp"

namespace piunet {

/// Divisor applied to QK^T before the row softmax.
enum class AttentionScale {
  kSqrtT,       // 1 / sqrt(T), the temporal length
  kSqrtKeyDim,  // 1 / sqrt(F'), the usual key-dimension scaling
};

inline void require_temporal(const Shape& s, const char* op) {
  if (s.size() != 5) throw ShapeError(std::string(op) + ": expected [B,T,F,H,W], got " + shape_str(s));
  if (s[1] < 1) throw ShapeError(std::string(op) + ": temporal length must be >= 1");
}

namespace detail {

// [B,T,F,H,W] -> [B*H*W, T, F]
template <typename T>
Tensor<T> to_pixel_rows(const Tensor<T>& x) {
  const auto& s = x.shape();
  return reshape(permute(x, {0, 3, 4, 1, 2}), {s[0] * s[3] * s[4], s[1], s[2]});
}

// [B*H*W, T, F] -> [B,T,F,H,W]
template <typename T>
Tensor<T> from_pixel_rows(const Tensor<T>& y, std::int64_t B, std::int64_t H, std::int64_t W) {
  return permute(reshape(y, {B, H, W, y.dim(1), y.dim(2)}), {0, 3, 4, 1, 2});
}

template <typename T>
Tensor<T> attention_matrix(const Tensor<T>& rows, const Tensor<T>& wq, const Tensor<T>& wk, AttentionScale scale) {
  const std::int64_t t = rows.dim(1);
  Tensor<T> q = matmul(rows, wq);
  Tensor<T> k = matmul(rows, wk);
  const double d = scale == AttentionScale::kSqrtT ? static_cast<double>(t) : static_cast<double>(wk.dim(1));
  Tensor<T> logits = mul_scalar(matmul(q, transpose_last2(k)), static_cast<T>(1.0 / std::sqrt(d)));
  return softmax_rows(logits);
}

template <typename T>
void check_attention_weights(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv) {
  require_temporal(x.shape(), "temporal_self_attention");
  const std::int64_t f = x.dim(2);
  for (const auto* w : {&wq, &wk, &wv}) {
    if (w->rank() != 2 || w->dim(0) != f) {
      throw ShapeError("temporal_self_attention: input has " + std::to_string(f) + " features but weight is " +
                       shape_str(w->shape()));
    }
  }
  if (wq.dim(1) != wk.dim(1)) throw ShapeError("temporal_self_attention: query/key widths differ");
}

}  // namespace detail

/// Per-pixel attention over the temporal axis: Y = softmax(Q K^T / s) V with
/// Q = X Wq, K = X Wk, V = X Wv and X the T x F feature matrix of one pixel.
/// Output [B, T, F', H, W].
template <typename T>
Tensor<T> temporal_self_attention(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                                  AttentionScale scale = AttentionScale::kSqrtT) {
  detail::check_attention_weights(x, wq, wk, wv);
  const auto& s = x.shape();
  Tensor<T> rows = detail::to_pixel_rows(x);
  Tensor<T> a = detail::attention_matrix(rows, wq, wk, scale);
  Tensor<T> y = matmul(a, matmul(rows, wv));
  return detail::from_pixel_rows(y, s[0], s[3], s[4]);
}

/// The T x T attention matrices, laid out [B, H, W, T, T].
template <typename T>
Tensor<T> temporal_attention_weights(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk,
                                     AttentionScale scale = AttentionScale::kSqrtT) {
  detail::check_attention_weights(x, wq, wk, wk);
  const auto& s = x.shape();
  Tensor<T> a = detail::attention_matrix(detail::to_pixel_rows(x), wq, wk, scale);
  return reshape(a, {s[0], s[3], s[4], s[1], s[1]});
}

/// The same 2-D convolution applied to every temporal slice.
template <typename T>
Tensor<T> shared_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias = Tensor<T>()) {
  require_temporal(x.shape(), "shared_conv2d");
  const auto& s = x.shape();
  Tensor<T> y = conv2d(reshape(x, {s[0] * s[1], s[2], s[3], s[4]}), w, bias);
  return reshape(y, {s[0], s[1], y.dim(1), s[3], s[4]});
}

/// Arithmetic mean over the temporal axis: [B,T,F,H,W] -> [B,F,H,W].
template <typename T>
Tensor<T> temporal_mean(const Tensor<T>& x) {
  require_temporal(x.shape(), "temporal_mean");
  return mean_over_axes(x, {1});
}

/// [B, r*r*C, H, W] -> [B, C, rH, rW] with
/// out(c, r*i + di, r*j + dj) = in(c*r*r + di*r + dj, i, j).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::int64_t r) {
  if (x.rank() != 4) throw ShapeError("pixel_shuffle: expected [B,C,H,W], got " + shape_str(x.shape()));
  if (r < 1 || x.dim(1) % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: " + std::to_string(x.dim(1)) + " channels not divisible by r^2 = " +
                     std::to_string(r * r));
  }
  const std::int64_t B = x.dim(0), C = x.dim(1) / (r * r), H = x.dim(2), W = x.dim(3);
  Tensor<T> v = reshape(x, {B, C, r, r, H, W});
  return reshape(permute(v, {0, 1, 4, 2, 5, 3}), {B, C, H * r, W * r});
}

/// Inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::int64_t r) {
  if (x.rank() != 4 || r < 1 || x.dim(2) % r || x.dim(3) % r) {
    throw ShapeError("pixel_unshuffle: spatial size not divisible by r for " + shape_str(x.shape()));
  }
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2) / r, W = x.dim(3) / r;
  Tensor<T> v = reshape(x, {B, C, H, r, W, r});
  return reshape(permute(v, {0, 1, 3, 5, 2, 4}), {B, C * r * r, H, W});
}

/// Sampling grid convention for resampling by an integer factor.
enum class Alignment {
  kHalfPixel,  // pixel centres: src = (dst + 0.5) / r - 0.5, clamped at the border
  kCorners,    // corner pixels coincide: src = dst * (n - 1) / (r n - 1)
};

struct LinearTap {
  std::int64_t i0 = 0, i1 = 0;
  double w0 = 1.0, w1 = 0.0;
};

inline std::vector<LinearTap> linear_taps(std::int64_t n, std::int64_t r, Alignment align) {
  const std::int64_t m = n * r;
  std::vector<LinearTap> taps(static_cast<std::size_t>(m));
  for (std::int64_t o = 0; o < m; ++o) {
    double src;
    if (align == Alignment::kCorners) {
      src = m > 1 ? static_cast<double>(o) * static_cast<double>(n - 1) / static_cast<double>(m - 1) : 0.0;
    } else {
      src = (static_cast<double>(o) + 0.5) / static_cast<double>(r) - 0.5;
    }
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    LinearTap t;
    t.i0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(src)), n - 1);
    t.i1 = std::min<std::int64_t>(t.i0 + 1, n - 1);
    t.w1 = src - static_cast<double>(t.i0);
    t.w0 = 1.0 - t.w1;
    taps[static_cast<std::size_t>(o)] = t;
  }
  return taps;
}

/// Separable bilinear upsampling [B,C,H,W] -> [B,C,rH,rW].
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, std::int64_t r, Alignment align = Alignment::kHalfPixel) {
  if (x.rank() != 4) throw ShapeError("bilinear_upsample: expected [B,C,H,W], got " + shape_str(x.shape()));
  if (r < 1) throw ShapeError("bilinear_upsample: factor must be >= 1");
  const std::int64_t P = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3), OH = H * r, OW = W * r;
  auto ty = linear_taps(H, r, align);
  auto tx = linear_taps(W, r, align);
  const auto& xv = x.vec();
  std::vector<T> out(static_cast<std::size_t>(P * OH * OW));
  std::vector<T> tmp(static_cast<std::size_t>(H * OW));
  for (std::int64_t p = 0; p < P; ++p) {
    const T* in = xv.data() + p * H * W;
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        const auto& t = tx[static_cast<std::size_t>(ox)];
        tmp[y * OW + ox] = static_cast<T>(t.w0) * in[y * W + t.i0] + static_cast<T>(t.w1) * in[y * W + t.i1];
      }
    T* o = out.data() + p * OH * OW;
    for (std::int64_t oy = 0; oy < OH; ++oy) {
      const auto& t = ty[static_cast<std::size_t>(oy)];
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        o[oy * OW + ox] = static_cast<T>(t.w0) * tmp[t.i0 * OW + ox] + static_cast<T>(t.w1) * tmp[t.i1 * OW + ox];
      }
    }
  }
  return detail::make_result<T>(
      "bilinear_upsample", Shape{x.dim(0), x.dim(1), OH, OW}, std::move(out), {x.node_ptr()},
      [=](Node<T>& self) {
        auto& d = self.parents[0]->grad_buffer();
        std::vector<T> gtmp(static_cast<std::size_t>(H * OW));
        for (std::int64_t p = 0; p < P; ++p) {
          const T* g = self.grad.data() + p * OH * OW;
          std::fill(gtmp.begin(), gtmp.end(), T(0));
          for (std::int64_t oy = 0; oy < OH; ++oy) {
            const auto& t = ty[static_cast<std::size_t>(oy)];
            for (std::int64_t ox = 0; ox < OW; ++ox) {
              gtmp[t.i0 * OW + ox] += static_cast<T>(t.w0) * g[oy * OW + ox];
              gtmp[t.i1 * OW + ox] += static_cast<T>(t.w1) * g[oy * OW + ox];
            }
          }
          T* dp = d.data() + p * H * W;
          for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t ox = 0; ox < OW; ++ox) {
              const auto& t = tx[static_cast<std::size_t>(ox)];
              dp[y * W + t.i0] += static_cast<T>(t.w0) * gtmp[y * OW + ox];
              dp[y * W + t.i1] += static_cast<T>(t.w1) * gtmp[y * OW + ox];
            }
        }
      });
}

}  // namespace piunet
