#pragma once

// The two composite equivariant blocks.
//
// TEFA (temporally-equivariant feature attention):
//   a = lrelu(shared_conv(x))          spatial features, per slice
//   b = temporal_self_attention(a)     temporal mixing
//   c = shared_conv(b)
//   s = sigmoid(fc2(lrelu(fc1(mean over T, H, W of c))))   in (0,1)^F
//   out = x + s * c
// s passes through a mean over time, so it is invariant; out is equivariant.
//
// TERN (temporally-equivariant registration net):
//   a = lrelu(shared_conv(x)); y = temporal_self_attention(a)
//   kernel[b,t] = softmax(linear(mean over H, W of y[b,t]))   K*K taps summing to 1
//   out[b,t,f] = kernel[b,t] (*) x[b,t,f]
// Each slice gets its own filter, shared by all of its features.

#include "piunet/equivariant.hpp"
#include "piunet/params.hpp"

namespace piunet {

struct TefaConfig {
  std::int64_t features = 42;
  std::int64_t bottleneck = 5;
  std::int64_t kernel = 3;
  double slope = 0.2;
  AttentionScale scale = AttentionScale::kSqrtT;

  void validate() const {
    if (features < 1 || bottleneck < 1 || bottleneck > features) {
      throw ConfigError("tefa: need 1 <= bottleneck <= features");
    }
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("tefa: kernel size must be odd");
  }
};

struct TernConfig {
  std::int64_t features = 42;
  std::int64_t kernel = 3;
  std::int64_t dynamic_kernel = 5;
  double slope = 0.2;
  AttentionScale scale = AttentionScale::kSqrtT;

  void validate() const {
    if (features < 1) throw ConfigError("tern: features must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("tern: kernel size must be odd");
    if (dynamic_kernel < 1 || dynamic_kernel % 2 == 0) throw ConfigError("tern: dynamic kernel size must be odd");
  }
};

template <typename T>
struct TefaParams {
  Tensor<T> conv1_w, conv1_b, wq, wk, wv, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b;

  static void declare(ParamSet<T>& ps, const std::string& p, const TefaConfig& c) {
    const auto F = c.features, k = c.kernel, nb = c.bottleneck;
    ps.add(p + ".conv1.w", {F, F, k, k});
    ps.add(p + ".conv1.b", {F});
    ps.add(p + ".attn.wq", {F, F});
    ps.add(p + ".attn.wk", {F, F});
    ps.add(p + ".attn.wv", {F, F});
    ps.add(p + ".conv2.w", {F, F, k, k});
    ps.add(p + ".conv2.b", {F});
    ps.add(p + ".fc1.w", {F, nb});
    ps.add(p + ".fc1.b", {nb});
    ps.add(p + ".fc2.w", {nb, F});
    ps.add(p + ".fc2.b", {F});
  }

  static TefaParams bind(const ParamSet<T>& ps, const std::string& p) {
    return {ps.get(p + ".conv1.w"), ps.get(p + ".conv1.b"), ps.get(p + ".attn.wq"), ps.get(p + ".attn.wk"),
            ps.get(p + ".attn.wv"),  ps.get(p + ".conv2.w"), ps.get(p + ".conv2.b"), ps.get(p + ".fc1.w"),
            ps.get(p + ".fc1.b"),   ps.get(p + ".fc2.w"),   ps.get(p + ".fc2.b")};
  }
};

template <typename T>
struct TernParams {
  Tensor<T> conv_w, conv_b, wq, wk, wv, kernel_w, kernel_b;

  static void declare(ParamSet<T>& ps, const std::string& p, const TernConfig& c) {
    const auto F = c.features, k = c.kernel, K2 = c.dynamic_kernel * c.dynamic_kernel;
    ps.add(p + ".conv.w", {F, F, k, k});
    ps.add(p + ".conv.b", {F});
    ps.add(p + ".attn.wq", {F, F});
    ps.add(p + ".attn.wk", {F, F});
    ps.add(p + ".attn.wv", {F, F});
    ps.add(p + ".kernel.w", {F, K2});
    ps.add(p + ".kernel.b", {K2});
  }

  static TernParams bind(const ParamSet<T>& ps, const std::string& p) {
    return {ps.get(p + ".conv.w"),  ps.get(p + ".conv.b"),   ps.get(p + ".attn.wq"), ps.get(p + ".attn.wk"),
            ps.get(p + ".attn.wv"), ps.get(p + ".kernel.w"), ps.get(p + ".kernel.b")};
  }
};

namespace detail {

template <typename T>
void require_features(const Tensor<T>& x, std::int64_t f, const char* op) {
  require_temporal(x.shape(), op);
  if (x.dim(2) != f) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.dim(2)) + " features, block expects " +
                     std::to_string(f));
  }
}

template <typename T>
Tensor<T> tefa_features(const Tensor<T>& x, const TefaParams<T>& p, const TefaConfig& c) {
  const T slope = static_cast<T>(c.slope);
  Tensor<T> a = leaky_relu(shared_conv2d(x, p.conv1_w, p.conv1_b), slope);
  Tensor<T> b = temporal_self_attention(a, p.wq, p.wk, p.wv, c.scale);
  return shared_conv2d(b, p.conv2_w, p.conv2_b);
}

template <typename T>
Tensor<T> tefa_scores_of(const Tensor<T>& feats, const TefaParams<T>& p, const TefaConfig& c) {
  Tensor<T> pooled = mean_over_axes(feats, {1, 3, 4});  // [B, F]
  Tensor<T> h = leaky_relu(add(matmul(pooled, p.fc1_w), p.fc1_b), static_cast<T>(c.slope));
  return sigmoid(add(matmul(h, p.fc2_w), p.fc2_b));
}

}  // namespace detail

/// Per-feature attention scores s in (0,1), shape [B, F].
template <typename T>
Tensor<T> tefa_scores(const Tensor<T>& x, const TefaParams<T>& p, const TefaConfig& c) {
  detail::require_features(x, c.features, "tefa_block");
  return detail::tefa_scores_of(detail::tefa_features(x, p, c), p, c);
}

template <typename T>
Tensor<T> tefa_block(const Tensor<T>& x, const TefaParams<T>& p, const TefaConfig& c) {
  detail::require_features(x, c.features, "tefa_block");
  Tensor<T> feats = detail::tefa_features(x, p, c);
  Tensor<T> s = detail::tefa_scores_of(feats, p, c);
  return add(x, mul(feats, reshape(s, {x.dim(0), 1, c.features, 1, 1})));
}

/// Predicted filters, shape [B, T, K, K]; each sums to one.
template <typename T>
Tensor<T> tern_kernels(const Tensor<T>& x, const TernParams<T>& p, const TernConfig& c) {
  detail::require_features(x, c.features, "tern_block");
  const T slope = static_cast<T>(c.slope);
  Tensor<T> a = leaky_relu(shared_conv2d(x, p.conv_w, p.conv_b), slope);
  Tensor<T> y = temporal_self_attention(a, p.wq, p.wk, p.wv, c.scale);
  Tensor<T> g = mean_over_axes(y, {3, 4});  // [B, T, F]
  Tensor<T> logits = add(matmul(g, p.kernel_w), p.kernel_b);
  return reshape(softmax_rows(logits), {x.dim(0), x.dim(1), c.dynamic_kernel, c.dynamic_kernel});
}

template <typename T>
Tensor<T> tern_block(const Tensor<T>& x, const TernParams<T>& p, const TernConfig& c) {
  const auto& s = x.shape();
  Tensor<T> kern = tern_kernels(x, p, c);
  Tensor<T> flat = reshape(x, {s[0] * s[1], s[2], s[3], s[4]});
  Tensor<T> filtered = dynamic_filter(flat, reshape(kern, {s[0] * s[1], c.dynamic_kernel, c.dynamic_kernel}));
  return reshape(filtered, s);
}

}  // namespace piunet
