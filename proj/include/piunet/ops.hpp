#pragma once

// Differentiable tensor operations: broadcasting elementwise arithmetic,
// reductions, layout changes, batched matmul and row softmax.

#include <Eigen/Core>

#include "piunet/tensor.hpp"

namespace piunet {

namespace detail {

/// Odometer over `shape`, calling fn(flat_out, off_a, off_b) with
/// stride-mapped offsets (stride 0 marks a broadcast axis).
template <typename Fn>
void for_each_strided(const Shape& shape, const Shape& sa, const Shape& sb, Fn&& fn) {
  const std::size_t rank = shape.size();
  const std::int64_t n = shape_numel(shape);
  if (n == 0) return;
  if (rank == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t oa = 0, ob = 0;
  const std::int64_t inner = shape[rank - 1];
  const std::int64_t ia = sa[rank - 1], ib = sb[rank - 1];
  for (std::int64_t flat = 0; flat < n; flat += inner) {
    for (std::int64_t j = 0; j < inner; ++j) fn(flat + j, oa + j * ia, ob + j * ib);
    for (std::int64_t ax = static_cast<std::int64_t>(rank) - 2; ax >= 0; --ax) {
      if (++idx[ax] < shape[ax]) {
        oa += sa[ax];
        ob += sb[ax];
        break;
      }
      oa -= sa[ax] * (shape[ax] - 1);
      ob -= sb[ax] * (shape[ax] - 1);
      idx[ax] = 0;
    }
  }
}

/// Strides of `in` viewed inside broadcast shape `out` (right-aligned).
inline Shape broadcast_strides(const Shape& in, const Shape& out) {
  Shape s(out.size(), 0);
  Shape cs = contiguous_strides(in);
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    s[off + i] = in[i] == 1 ? 0 : cs[i];
  }
  return s;
}

}  // namespace detail

inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

namespace detail {

// Binary elementwise op with broadcasting. df returns (d/da, d/db) given a, b, y.
template <typename T, typename F, typename DF>
Tensor<T> binary(const char* name, const Tensor<T>& a, const Tensor<T>& b, F f, DF df) {
  const auto& av = a.vec();
  const auto& bv = b.vec();
  if (a.shape() == b.shape()) {
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
    return make_result<T>(name, a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                          [df](Node<T>& self) {
                            auto& pa = self.parents[0];
                            auto& pb = self.parents[1];
                            const auto& g = self.grad;
                            const bool ga = pa->requires_grad, gb = pb->requires_grad;
                            T* da = ga ? pa->grad_buffer().data() : nullptr;
                            T* db = gb ? pb->grad_buffer().data() : nullptr;
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              auto [x, y] = df(pa->value[i], pb->value[i], self.value[i]);
                              if (ga) da[i] += g[i] * x;
                              if (gb) db[i] += g[i] * y;
                            }
                          });
  }
  Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  Shape sa = broadcast_strides(a.shape(), out_shape);
  Shape sb = broadcast_strides(b.shape(), out_shape);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  for_each_strided(out_shape, sa, sb,
                   [&](std::int64_t o, std::int64_t ia, std::int64_t ib) { out[o] = f(av[ia], bv[ib]); });
  return make_result<T>(name, out_shape, std::move(out), {a.node_ptr(), b.node_ptr()},
                        [df, sa, sb](Node<T>& self) {
                          auto& pa = self.parents[0];
                          auto& pb = self.parents[1];
                          const auto& g = self.grad;
                          const bool ga = pa->requires_grad, gb = pb->requires_grad;
                          T* da = ga ? pa->grad_buffer().data() : nullptr;
                          T* db = gb ? pb->grad_buffer().data() : nullptr;
                          for_each_strided(self.shape, sa, sb,
                                           [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                                             auto [x, y] = df(pa->value[ia], pb->value[ib], self.value[o]);
                                             if (ga) da[ia] += g[o] * x;
                                             if (gb) db[ib] += g[o] * y;
                                           });
                        });
}

// Unary elementwise op. df returns dy/dx given x, y.
template <typename T, typename F, typename DF>
Tensor<T> unary(const char* name, const Tensor<T>& x, F f, DF df) {
  const auto& xv = x.vec();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result<T>(name, x.shape(), std::move(out), {x.node_ptr()}, [df](Node<T>& self) {
    auto& p = self.parents[0];
    auto& d = p->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * df(p->value[i], self.value[i]);
  });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return std::pair<T, T>{T(1), T(1)}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return std::pair<T, T>{T(1), T(-1)}; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T x, T y, T) { return std::pair<T, T>{y, x}; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "div", a, b, [](T x, T y) { return x / y; },
      [](T x, T y, T) { return std::pair<T, T>{T(1) / y, -x / (y * y)}; });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) {
  return div(a, b);
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary<T>("add_scalar", x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  return detail::unary<T>("mul_scalar", x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return detail::unary<T>("neg", x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

/// Subgradient 0 at 0.
template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary<T>("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary<T>("square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return detail::unary<T>(
      "leaky_relu", x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.vec()) acc += v;
  return detail::make_result<T>("sum", {}, {acc}, {x.node_ptr()}, [](Node<T>& self) {
    auto& d = self.parents[0]->grad_buffer();
    const T g = self.grad[0];
    for (auto& v : d) v += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  T acc = T(0);
  for (T v : x.vec()) acc += v;
  const T n = static_cast<T>(x.numel());
  return detail::make_result<T>("mean", {}, {acc / n}, {x.node_ptr()}, [n](Node<T>& self) {
    auto& d = self.parents[0]->grad_buffer();
    const T g = self.grad[0] / n;
    for (auto& v : d) v += g;
  });
}

namespace detail {

inline std::vector<bool> axis_mask(std::int64_t rank, const std::vector<std::int64_t>& axes) {
  std::vector<bool> m(static_cast<std::size_t>(rank), false);
  for (auto a : axes) {
    if (a < 0) a += rank;
    if (a < 0 || a >= rank) throw ShapeError("reduce: axis out of range");
    m[static_cast<std::size_t>(a)] = true;
  }
  return m;
}

template <typename T>
Tensor<T> reduce_axes(const char* name, const Tensor<T>& x, const std::vector<std::int64_t>& axes,
                      bool keepdim, bool average) {
  const Shape& in = x.shape();
  auto m = axis_mask(x.rank(), axes);
  Shape kept(in.size());
  Shape out_shape;
  std::int64_t count = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    kept[i] = m[i] ? 1 : in[i];
    if (m[i]) count *= in[i];
    if (!m[i]) out_shape.push_back(in[i]);
    else if (keepdim) out_shape.push_back(1);
  }
  // Input-order traversal: each output sums its inputs left to right.
  Shape so = broadcast_strides(kept, in);
  Shape sx = contiguous_strides(in);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(kept)), T(0));
  const auto& xv = x.vec();
  for_each_strided(in, sx, so, [&](std::int64_t, std::int64_t ix, std::int64_t io) { out[io] += xv[ix]; });
  const T scale = average ? T(1) / static_cast<T>(count) : T(1);
  if (average) {
    for (auto& v : out) v /= static_cast<T>(count);
  }
  return make_result<T>(name, out_shape, std::move(out), {x.node_ptr()},
                        [in, sx, so, scale](Node<T>& self) {
                          auto& d = self.parents[0]->grad_buffer();
                          const auto& g = self.grad;
                          for_each_strided(in, sx, so, [&](std::int64_t, std::int64_t ix, std::int64_t io) {
                            d[ix] += g[io] * scale;
                          });
                        });
}

}  // namespace detail

template <typename T>
Tensor<T> sum_over_axes(const Tensor<T>& x, const std::vector<std::int64_t>& axes, bool keepdim = false) {
  return detail::reduce_axes("sum_over_axes", x, axes, keepdim, false);
}

template <typename T>
Tensor<T> mean_over_axes(const Tensor<T>& x, const std::vector<std::int64_t>& axes, bool keepdim = false) {
  return detail::reduce_axes("mean_over_axes", x, axes, keepdim, true);
}

// ------------------------------------------------------------------- layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  std::int64_t infer = -1, known = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one inferred axis");
      infer = static_cast<std::int64_t>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return detail::make_result<T>("reshape", std::move(shape), x.vec(), {x.node_ptr()}, [](Node<T>& self) {
    auto& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape) {
  if (broadcast_shapes(x.shape(), shape) != shape) {
    throw ShapeError("broadcast_to: " + shape_str(x.shape()) + " does not broadcast to " + shape_str(shape));
  }
  Shape sx = detail::broadcast_strides(x.shape(), shape);
  Shape so = contiguous_strides(shape);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(shape)));
  const auto& xv = x.vec();
  detail::for_each_strided(shape, so, sx, [&](std::int64_t o, std::int64_t, std::int64_t ix) { out[o] = xv[ix]; });
  return detail::make_result<T>("broadcast_to", shape, std::move(out), {x.node_ptr()}, [so, sx](Node<T>& self) {
    auto& d = self.parents[0]->grad_buffer();
    detail::for_each_strided(self.shape, so, sx,
                             [&](std::int64_t o, std::int64_t, std::int64_t ix) { d[ix] += self.grad[o]; });
  });
}

/// out.shape[i] = x.shape[perm[i]].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::int64_t>& perm) {
  const Shape& in = x.shape();
  if (perm.size() != in.size()) throw ShapeError("permute: rank mismatch");
  Shape out_shape(in.size()), sx_perm(in.size());
  Shape sx = contiguous_strides(in);
  std::vector<bool> used(in.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    auto p = static_cast<std::size_t>(perm[i]);
    if (p >= in.size() || used[p]) throw ShapeError("permute: invalid permutation");
    used[p] = true;
    out_shape[i] = in[p];
    sx_perm[i] = sx[p];
  }
  Shape so = contiguous_strides(out_shape);
  std::vector<T> out(x.vec().size());
  const auto& xv = x.vec();
  detail::for_each_strided(out_shape, so, sx_perm,
                           [&](std::int64_t o, std::int64_t, std::int64_t ix) { out[o] = xv[ix]; });
  return detail::make_result<T>("permute", out_shape, std::move(out), {x.node_ptr()},
                                [so, sx_perm](Node<T>& self) {
                                  auto& d = self.parents[0]->grad_buffer();
                                  detail::for_each_strided(self.shape, so, sx_perm,
                                                           [&](std::int64_t o, std::int64_t, std::int64_t ix) {
                                                             d[ix] += self.grad[o];
                                                           });
                                });
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("transpose_last2: rank < 2");
  std::vector<std::int64_t> perm(static_cast<std::size_t>(x.rank()));
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(x, perm);
}

/// Contiguous sub-block: axis i keeps [start[i], start[i] + size[i]).
template <typename T>
Tensor<T> slice(const Tensor<T>& x, const Shape& start, const Shape& size) {
  const Shape& in = x.shape();
  if (start.size() != in.size() || size.size() != in.size()) throw ShapeError("slice: rank mismatch");
  std::int64_t base = 0;
  Shape sx = contiguous_strides(in);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (start[i] < 0 || size[i] < 0 || start[i] + size[i] > in[i]) {
      throw ShapeError("slice: window out of range for " + shape_str(in));
    }
    base += start[i] * sx[i];
  }
  Shape so = contiguous_strides(size);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(size)));
  const auto& xv = x.vec();
  detail::for_each_strided(size, so, sx, [&](std::int64_t o, std::int64_t, std::int64_t ix) { out[o] = xv[base + ix]; });
  return detail::make_result<T>("slice", size, std::move(out), {x.node_ptr()}, [so, sx, base](Node<T>& self) {
    auto& d = self.parents[0]->grad_buffer();
    detail::for_each_strided(self.shape, so, sx,
                             [&](std::int64_t o, std::int64_t, std::int64_t ix) { d[base + ix] += self.grad[o]; });
  });
}

// ------------------------------------------------------------------- matmul

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;

// c (+)= op(a) * op(b), row-major, with optional transposes.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n, bool ta, bool tb,
          bool accumulate) {
  if (m * n * k < 4096) {
    // tiny products (per-pixel attention): plain loops beat GEMM dispatch
    if (!accumulate) std::fill(c, c + m * n, T(0));
    for (std::int64_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (std::int64_t p = 0; p < k; ++p) {
        const T av = ta ? a[p * m + i] : a[i * k + p];
        if (tb) {
          for (std::int64_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
        } else {
          const T* brow = b + p * n;
          for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    }
    return;
  }
  MapM<T> C(c, m, n);
  if (!ta && !tb) {
    if (accumulate) C.noalias() += MapC<T>(a, m, k) * MapC<T>(b, k, n);
    else C.noalias() = MapC<T>(a, m, k) * MapC<T>(b, k, n);
  } else if (ta && !tb) {
    if (accumulate) C.noalias() += MapC<T>(a, k, m).transpose() * MapC<T>(b, k, n);
    else C.noalias() = MapC<T>(a, k, m).transpose() * MapC<T>(b, k, n);
  } else if (!ta && tb) {
    if (accumulate) C.noalias() += MapC<T>(a, m, k) * MapC<T>(b, n, k).transpose();
    else C.noalias() = MapC<T>(a, m, k) * MapC<T>(b, n, k).transpose();
  } else {
    if (accumulate) C.noalias() += MapC<T>(a, k, m).transpose() * MapC<T>(b, n, k).transpose();
    else C.noalias() = MapC<T>(a, k, m).transpose() * MapC<T>(b, n, k).transpose();
  }
}

}  // namespace detail

/// Batched matrix product [.., m, k] x [.., k, n] with broadcast batch axes.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  Shape ba(a.shape().begin(), a.shape().end() - 2);
  Shape bb(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  try {
    batch = broadcast_shapes(ba, bb);
  } catch (const ShapeError&) {
    throw ShapeError("matmul: batch axes do not broadcast for " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));

  // Shared right operand: one tall GEMM.
  if (bb.empty() && shape_numel(ba) == shape_numel(batch)) {
    const std::int64_t rows = shape_numel(batch) * m;
    detail::gemm(a.vec().data(), b.vec().data(), out.data(), rows, k, n, false, false, false);
    return detail::make_result<T>("matmul", out_shape, std::move(out), {a.node_ptr(), b.node_ptr()},
                                  [rows, k, n](Node<T>& self) {
                                    auto& pa = self.parents[0];
                                    auto& pb = self.parents[1];
                                    if (pa->requires_grad)
                                      detail::gemm(self.grad.data(), pb->value.data(), pa->grad_buffer().data(), rows,
                                                   n, k, false, true, true);
                                    if (pb->requires_grad)
                                      detail::gemm(pa->value.data(), self.grad.data(), pb->grad_buffer().data(), k,
                                                   rows, n, true, false, true);
                                  });
  }

  Shape sa = batch.empty() ? Shape{} : detail::broadcast_strides(ba, batch);
  Shape sb = batch.empty() ? Shape{} : detail::broadcast_strides(bb, batch);
  // batch-offset tables, in units of whole matrices
  std::vector<std::int64_t> offa, offb;
  offa.reserve(static_cast<std::size_t>(shape_numel(batch)));
  offb.reserve(offa.capacity());
  detail::for_each_strided(batch, sa, sb, [&](std::int64_t, std::int64_t ia, std::int64_t ib) {
    offa.push_back(ia);
    offb.push_back(ib);
  });
  const auto& av = a.vec();
  const auto& bv = b.vec();
  for (std::size_t i = 0; i < offa.size(); ++i) {
    detail::gemm(av.data() + offa[i] * m * k, bv.data() + offb[i] * k * n, out.data() + i * m * n, m, k, n, false,
                 false, false);
  }
  return detail::make_result<T>(
      "matmul", out_shape, std::move(out), {a.node_ptr(), b.node_ptr()},
      [offa = std::move(offa), offb = std::move(offb), m, k, n](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const bool ga = pa->requires_grad, gb = pb->requires_grad;
        T* da = ga ? pa->grad_buffer().data() : nullptr;
        T* db = gb ? pb->grad_buffer().data() : nullptr;
        for (std::size_t i = 0; i < offa.size(); ++i) {
          const T* g = self.grad.data() + i * m * n;
          if (ga) detail::gemm(g, pb->value.data() + offb[i] * k * n, da + offa[i] * m * k, m, n, k, false, true, true);
          if (gb) detail::gemm(pa->value.data() + offa[i] * m * k, g, db + offb[i] * k * n, k, m, n, true, false, true);
        }
      });
}

/// Softmax along the last axis with max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  if (x.rank() < 1 || x.dim(-1) < 1) throw ShapeError("softmax_rows: last axis must be non-empty");
  const std::int64_t cols = x.dim(-1);
  const std::int64_t rows = x.numel() / cols;
  const auto& xv = x.vec();
  std::vector<T> out(xv.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T* o = out.data() + r * cols;
    T mx = in[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    T s = T(0);
    for (std::int64_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      s += o[c];
    }
    for (std::int64_t c = 0; c < cols; ++c) o[c] /= s;
  }
  return detail::make_result<T>("softmax_rows", x.shape(), std::move(out), {x.node_ptr()},
                                [rows, cols](Node<T>& self) {
                                  auto& d = self.parents[0]->grad_buffer();
                                  for (std::int64_t r = 0; r < rows; ++r) {
                                    const T* y = self.value.data() + r * cols;
                                    const T* g = self.grad.data() + r * cols;
                                    T dot = T(0);
                                    for (std::int64_t c = 0; c < cols; ++c) dot += g[c] * y[c];
                                    for (std::int64_t c = 0; c < cols; ++c) d[r * cols + c] += y[c] * (g[c] - dot);
                                  }
                                });
}

}  // namespace piunet
