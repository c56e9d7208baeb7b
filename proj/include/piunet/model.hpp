#pragma once

// Full network: entry lift -> TEFA stack -> TERN -> temporal mean -> two heads.
//
// Input is the registered, normalized LR stack [B, T, C, H, W]; T is free.
// Both heads are conv -> pixel_shuffle(r) -> conv. The SR head adds the
// bilinear upsampling of the temporal mean of the input (global skip); the
// uncertainty head predicts delta = log(beta) with no skip.

#include <random>

#include "piunet/blocks.hpp"

namespace piunet {

struct ModelConfig {
  std::int64_t n_tefa = 16;
  std::int64_t n_tern = 1;
  std::int64_t features = 42;
  std::int64_t bottleneck = 5;
  std::int64_t kernel = 3;
  std::int64_t tern_kernel = 5;
  std::int64_t scale = 3;
  std::int64_t in_channels = 1;
  double slope = 0.2;
  AttentionScale attention_scale = AttentionScale::kSqrtT;
  Alignment skip_alignment = Alignment::kHalfPixel;

  void validate() const {
    if (n_tefa < 1) throw ConfigError("model: n_tefa must be >= 1");
    if (n_tern < 0) throw ConfigError("model: n_tern must be >= 0");
    if (scale < 1) throw ConfigError("model: scale must be >= 1");
    if (in_channels != 1) throw ConfigError("model: only single-band input is supported");
    tefa().validate();
    tern().validate();
  }

  TefaConfig tefa() const { return {features, bottleneck, kernel, slope, attention_scale}; }
  TernConfig tern() const { return {features, kernel, tern_kernel, slope, attention_scale}; }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("model.n_tefa", n_tefa);
    kv.set("model.n_tern", n_tern);
    kv.set("model.features", features);
    kv.set("model.bottleneck", bottleneck);
    kv.set("model.kernel", kernel);
    kv.set("model.tern_kernel", tern_kernel);
    kv.set("model.scale", scale);
    kv.set("model.in_channels", in_channels);
    kv.set("model.slope", slope);
    kv.set("model.attention_scale", attention_scale == AttentionScale::kSqrtT ? "sqrt_t" : "sqrt_key_dim");
    kv.set("model.skip_alignment", skip_alignment == Alignment::kHalfPixel ? "half_pixel" : "corners");
    return kv;
  }

  static ModelConfig from_kv(const KeyValues& kv) { return from_kv(kv, ModelConfig()); }
  static ModelConfig from_kv(const KeyValues& kv, const ModelConfig& base) {
    ModelConfig c = base;
    c.n_tefa = kv.get_number("model.n_tefa", c.n_tefa);
    c.n_tern = kv.get_number("model.n_tern", c.n_tern);
    c.features = kv.get_number("model.features", c.features);
    c.bottleneck = kv.get_number("model.bottleneck", c.bottleneck);
    c.kernel = kv.get_number("model.kernel", c.kernel);
    c.tern_kernel = kv.get_number("model.tern_kernel", c.tern_kernel);
    c.scale = kv.get_number("model.scale", c.scale);
    c.in_channels = kv.get_number("model.in_channels", c.in_channels);
    c.slope = kv.get_number("model.slope", c.slope);
    const auto as = kv.get("model.attention_scale", "sqrt_t");
    if (as == "sqrt_t") c.attention_scale = AttentionScale::kSqrtT;
    else if (as == "sqrt_key_dim") c.attention_scale = AttentionScale::kSqrtKeyDim;
    else throw ConfigError("model.attention_scale must be sqrt_t or sqrt_key_dim");
    const auto al = kv.get("model.skip_alignment", "half_pixel");
    if (al == "half_pixel") c.skip_alignment = Alignment::kHalfPixel;
    else if (al == "corners") c.skip_alignment = Alignment::kCorners;
    else throw ConfigError("model.skip_alignment must be half_pixel or corners");
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct SrOutput {
  Tensor<T> sr;     // [B, 1, rH, rW]
  Tensor<T> delta;  // [B, 1, rH, rW], log of the Laplacian scale
};

inline std::string tefa_prefix(std::int64_t i) { return "tefa." + std::to_string(i); }
inline std::string tern_prefix(std::int64_t i) { return "tern." + std::to_string(i); }
inline constexpr const char* kSrHead = "sr_head";
inline constexpr const char* kUncertaintyHead = "unc_head";

template <typename T>
ParamSet<T> declare_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamSet<T> ps;
  const auto F = cfg.features, k = cfg.kernel, r2 = cfg.scale * cfg.scale;
  ps.add("entry.w", {F, cfg.in_channels, k, k});
  ps.add("entry.b", {F});
  for (std::int64_t i = 0; i < cfg.n_tefa; ++i) TefaParams<T>::declare(ps, tefa_prefix(i), cfg.tefa());
  for (std::int64_t i = 0; i < cfg.n_tern; ++i) TernParams<T>::declare(ps, tern_prefix(i), cfg.tern());
  for (const char* head : {kSrHead, kUncertaintyHead}) {
    const std::string h = head;
    ps.add(h + ".conv1.w", {r2 * F, F, k, k});
    ps.add(h + ".conv1.b", {r2 * F});
    ps.add(h + ".conv2.w", {1, F, k, k});
    ps.add(h + ".conv2.b", {1});
  }
  return ps;
}

inline std::int64_t count_params(const ModelConfig& cfg) { return declare_params<float>(cfg).scalar_count(); }

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
template <typename T>
void init_params(ParamSet<T>& ps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : ps) {
    auto v = t.mutable_values();
    const bool is_bias = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    if (is_bias || t.rank() < 2) {
      std::fill(v.begin(), v.end(), T(0));
      continue;
    }
    // conv weights [O, C, k, k]: fan_in = C k k; matrices [in, out]: fan_in = rows
    const std::int64_t fan_in = t.rank() == 4 ? t.dim(1) * t.dim(2) * t.dim(3) : t.dim(0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& x : v) x = static_cast<T>(u(rng));
  }
}

namespace detail {

template <typename T>
Tensor<T> head(const Tensor<T>& z, const ParamSet<T>& ps, const std::string& h, std::int64_t r) {
  Tensor<T> up = pixel_shuffle(conv2d(z, ps.get(h + ".conv1.w"), ps.get(h + ".conv1.b")), r);
  return conv2d(up, ps.get(h + ".conv2.w"), ps.get(h + ".conv2.b"));
}

}  // namespace detail

template <typename T>
SrOutput<T> forward(const Tensor<T>& lr, const ParamSet<T>& ps, const ModelConfig& cfg) {
  if (lr.rank() != 5 || lr.dim(1) < 1 || lr.dim(2) != cfg.in_channels) {
    throw ShapeError("forward: expected LR stack [B,T," + std::to_string(cfg.in_channels) + ",H,W], got " +
                     shape_str(lr.shape()));
  }
  for (T v : lr.values()) {
    if (!std::isfinite(v)) throw NonFiniteError("forward: LR stack contains non-finite values");
  }
  if (!ps.contains(tefa_prefix(cfg.n_tefa - 1) + ".conv1.w") || ps.contains(tefa_prefix(cfg.n_tefa) + ".conv1.w") ||
      ps.contains(tern_prefix(cfg.n_tern) + ".conv.w") ||
      (cfg.n_tern > 0 && !ps.contains(tern_prefix(cfg.n_tern - 1) + ".conv.w")) ||
      ps.get("entry.w").dim(0) != cfg.features) {
    throw ConfigError("forward: parameter set does not match the model configuration");
  }
  Tensor<T> h = shared_conv2d(lr, ps.get("entry.w"), ps.get("entry.b"));
  for (std::int64_t i = 0; i < cfg.n_tefa; ++i) {
    h = tefa_block(h, TefaParams<T>::bind(ps, tefa_prefix(i)), cfg.tefa());
  }
  for (std::int64_t i = 0; i < cfg.n_tern; ++i) {
    h = tern_block(h, TernParams<T>::bind(ps, tern_prefix(i)), cfg.tern());
  }
  Tensor<T> z = temporal_mean(h);  // invariance point
  Tensor<T> skip = bilinear_upsample(temporal_mean(lr), cfg.scale, cfg.skip_alignment);
  SrOutput<T> out;
  out.sr = add(detail::head(z, ps, kSrHead, cfg.scale), skip);
  out.delta = detail::head(z, ps, kUncertaintyHead, cfg.scale);
  return out;
}

inline bool is_uncertainty_param(const std::string& name) {
  return name.rfind(std::string(kUncertaintyHead) + ".", 0) == 0;
}

template <typename T>
void save_params(const std::string& path, const ParamSet<T>& ps, const ModelConfig& cfg) {
  write_archive(path, ps.to_archive(cfg.to_kv()));
}

template <typename T>
struct LoadedModel {
  ModelConfig config;
  ParamSet<T> params;
};

/// Loads an archive, rebuilding the configuration stored in its header.
template <typename T>
LoadedModel<T> load_params(const std::string& path) {
  Archive ar = read_archive(path);
  LoadedModel<T> m{ModelConfig::from_kv(ar.meta), {}};
  m.params = declare_params<T>(m.config);
  m.params.assign(ar);
  return m;
}

/// Loads into a caller-specified configuration; mismatches list the tensors.
template <typename T>
ParamSet<T> load_params(const std::string& path, const ModelConfig& expected) {
  Archive ar = read_archive(path);
  ParamSet<T> ps = declare_params<T>(expected);
  ps.assign(ar);
  return ps;
}

}  // namespace piunet
