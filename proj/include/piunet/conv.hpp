#pragma once

// 2-D cross-correlation with zero same-padding, and the per-sample dynamic
// filter used by the registration block.

#include "piunet/ops.hpp"

namespace piunet {

namespace detail {

// col[(c*k + dy)*k + dx][y*w + x] = img[c][y + dy - pad][x + dx - pad] (0 outside)
template <typename T>
void im2col(const T* img, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t k, T* col) {
  const std::int64_t pad = k / 2;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t dy = 0; dy < k; ++dy) {
      for (std::int64_t dx = 0; dx < k; ++dx) {
        T* row = col + ((ch * k + dy) * k + dx) * h * w;
        const std::int64_t x0 = std::max<std::int64_t>(0, pad - dx);
        const std::int64_t x1 = std::min<std::int64_t>(w, w + pad - dx);
        for (std::int64_t y = 0; y < h; ++y) {
          const std::int64_t sy = y + dy - pad;
          T* dst = row + y * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = img + (ch * h + sy) * w + dx - pad;
          std::fill(dst, dst + x0, T(0));
          std::copy(src + x0, src + x1, dst + x0);
          std::fill(dst + x1, dst + w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t k, T* img) {
  const std::int64_t pad = k / 2;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t dy = 0; dy < k; ++dy) {
      for (std::int64_t dx = 0; dx < k; ++dx) {
        const T* row = col + ((ch * k + dy) * k + dx) * h * w;
        for (std::int64_t y = 0; y < h; ++y) {
          const std::int64_t sy = y + dy - pad;
          if (sy < 0 || sy >= h) continue;
          T* dst = img + (ch * h + sy) * w;
          const T* src = row + y * w;
          const std::int64_t x0 = std::max<std::int64_t>(0, pad - dx);
          const std::int64_t x1 = std::min<std::int64_t>(w, w + pad - dx);
          for (std::int64_t x = x0; x < x1; ++x) dst[x + dx - pad] += src[x];
        }
      }
    }
  }
}

}  // namespace detail

/// x [B, Cin, H, W], w [Cout, Cin, k, k], bias [Cout] or undefined.
/// Output [B, Cout, H, W]; odd k, zero padding k/2.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias = Tensor<T>()) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw ShapeError("conv2d: expected x [B,C,H,W] and w [O,C,k,k], got " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t O = w.dim(0), k = w.dim(2);
  if (w.dim(1) != C) {
    throw ShapeError("conv2d: input has " + std::to_string(C) + " channels but kernel " + shape_str(w.shape()) +
                     " expects " + std::to_string(w.dim(1)));
  }
  if (w.dim(3) != k || k % 2 == 0) throw ShapeError("conv2d: kernel must be square with odd size, got " + shape_str(w.shape()));
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != O)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(O) + " outputs");
  }
  const std::int64_t HW = H * W, K = C * k * k;
  std::vector<T> out(static_cast<std::size_t>(B * O * HW));
  std::vector<T> col(static_cast<std::size_t>(K * HW));
  const auto& xv = x.vec();
  const auto& wv = w.vec();
  for (std::int64_t b = 0; b < B; ++b) {
    T* ob = out.data() + b * O * HW;
    if (k == 1) {
      detail::gemm(wv.data(), xv.data() + b * C * HW, ob, O, K, HW, false, false, false);
    } else {
      detail::im2col(xv.data() + b * C * HW, C, H, W, k, col.data());
      detail::gemm(wv.data(), col.data(), ob, O, K, HW, false, false, false);
    }
    if (has_bias) {
      const auto& bv = bias.vec();
      for (std::int64_t o = 0; o < O; ++o) {
        T* row = ob + o * HW;
        for (std::int64_t i = 0; i < HW; ++i) row[i] += bv[o];
      }
    }
  }
  std::vector<std::shared_ptr<Node<T>>> parents{x.node_ptr(), w.node_ptr()};
  if (has_bias) parents.push_back(bias.node_ptr());
  return detail::make_result<T>(
      "conv2d", Shape{B, O, H, W}, std::move(out), std::move(parents), [=](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        const bool gx = px->requires_grad, gw = pw->requires_grad;
        const bool gb = has_bias && self.parents[2]->requires_grad;
        std::vector<T> col_buf(static_cast<std::size_t>(K * HW));
        T* dx = gx ? px->grad_buffer().data() : nullptr;
        T* dw = gw ? pw->grad_buffer().data() : nullptr;
        T* db = gb ? self.parents[2]->grad_buffer().data() : nullptr;
        for (std::int64_t b = 0; b < B; ++b) {
          const T* g = self.grad.data() + b * O * HW;
          const T* xb = px->value.data() + b * C * HW;
          if (gw) {
            const T* cb = xb;
            if (k != 1) {
              detail::im2col(xb, C, H, W, k, col_buf.data());
              cb = col_buf.data();
            }
            detail::gemm(g, cb, dw, O, HW, K, false, true, true);
          }
          if (gx) {
            if (k == 1) {
              detail::gemm(pw->value.data(), g, dx + b * C * HW, K, O, HW, true, false, true);
            } else {
              detail::gemm(pw->value.data(), g, col_buf.data(), K, O, HW, true, false, false);
              detail::col2im_add(col_buf.data(), C, H, W, k, dx + b * C * HW);
            }
          }
          if (gb) {
            for (std::int64_t o = 0; o < O; ++o) {
              T acc = T(0);
              for (std::int64_t i = 0; i < HW; ++i) acc += g[o * HW + i];
              db[o] += acc;
            }
          }
        }
      });
}

/// x [N, C, H, W] filtered by one k x k kernel per sample, kern [N, k, k],
/// shared across the C channels of that sample. Same padding.
template <typename T>
Tensor<T> dynamic_filter(const Tensor<T>& x, const Tensor<T>& kern) {
  if (x.rank() != 4 || kern.rank() != 3 || kern.dim(0) != x.dim(0) || kern.dim(1) != kern.dim(2) ||
      kern.dim(1) % 2 == 0) {
    throw ShapeError("dynamic_filter: expected x [N,C,H,W] and kernels [N,k,k] with odd k, got " +
                     shape_str(x.shape()) + " and " + shape_str(kern.shape()));
  }
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), k = kern.dim(1), pad = k / 2;
  const auto& xv = x.vec();
  const auto& kv = kern.vec();
  std::vector<T> out(xv.size(), T(0));
  auto loop = [=](auto&& body) {
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c) {
        const std::int64_t plane = (n * C + c) * H * W;
        for (std::int64_t dy = 0; dy < k; ++dy)
          for (std::int64_t dx = 0; dx < k; ++dx) {
            const std::int64_t ki = (n * k + dy) * k + dx;
            const std::int64_t y0 = std::max<std::int64_t>(0, pad - dy), y1 = std::min<std::int64_t>(H, H + pad - dy);
            const std::int64_t x0 = std::max<std::int64_t>(0, pad - dx), x1 = std::min<std::int64_t>(W, W + pad - dx);
            for (std::int64_t y = y0; y < y1; ++y) {
              const std::int64_t orow = plane + y * W;
              const std::int64_t irow = plane + (y + dy - pad) * W + dx - pad;
              body(ki, orow, irow, x0, x1);
            }
          }
      }
  };
  loop([&](std::int64_t ki, std::int64_t orow, std::int64_t irow, std::int64_t x0, std::int64_t x1) {
    const T kval = kv[ki];
    for (std::int64_t xx = x0; xx < x1; ++xx) out[orow + xx] += kval * xv[irow + xx];
  });
  return detail::make_result<T>("dynamic_filter", x.shape(), std::move(out), {x.node_ptr(), kern.node_ptr()},
                                [loop](Node<T>& self) {
                                  auto& px = self.parents[0];
                                  auto& pk = self.parents[1];
                                  const bool gx = px->requires_grad, gk = pk->requires_grad;
                                  T* dx = gx ? px->grad_buffer().data() : nullptr;
                                  T* dk = gk ? pk->grad_buffer().data() : nullptr;
                                  const T* g = self.grad.data();
                                  const T* xs = px->value.data();
                                  const T* ks = pk->value.data();
                                  loop([&](std::int64_t ki, std::int64_t orow, std::int64_t irow, std::int64_t x0,
                                           std::int64_t x1) {
                                    if (gx) {
                                      const T kval = ks[ki];
                                      for (std::int64_t xx = x0; xx < x1; ++xx) dx[irow + xx] += kval * g[orow + xx];
                                    }
                                    if (gk) {
                                      T acc = T(0);
                                      for (std::int64_t xx = x0; xx < x1; ++xx) acc += g[orow + xx] * xs[irow + xx];
                                      dk[ki] += acc;
                                    }
                                  });
                                });
}

}  // namespace piunet
