#pragma once

// Adam with bias correction, state kept per parameter name.

#include "piunet/params.hpp"

namespace piunet {

class DivergenceError : public Error {
 public:
  using Error::Error;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm limit, 0 = off
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, std::vector<T>> m, v;

  Archive to_archive() const {
    Archive ar;
    ar.meta.set("adam.step", step);
    for (const auto* bank : {&m, &v}) {
      const std::string prefix = bank == &m ? "m/" : "v/";
      for (const auto& [name, vals] : *bank) {
        ArchivedTensor t{prefix + name, {static_cast<std::int64_t>(vals.size())}, dtype_of<T>(), {}};
        t.values.assign(vals.begin(), vals.end());
        ar.tensors.push_back(std::move(t));
      }
    }
    return ar;
  }

  static AdamState from_archive(const Archive& ar) {
    AdamState s;
    s.step = ar.meta.require_number<std::int64_t>("adam.step");
    for (const auto& t : ar.tensors) {
      std::vector<T> vals(t.values.begin(), t.values.end());
      if (t.name.rfind("m/", 0) == 0) s.m[t.name.substr(2)] = std::move(vals);
      else if (t.name.rfind("v/", 0) == 0) s.v[t.name.substr(2)] = std::move(vals);
      else throw ArchiveError("optimizer archive: unexpected tensor " + t.name);
    }
    return s;
  }
};

/// One update of every parameter in `ps` that has a gradient and passes
/// `trainable`. Non-finite gradients abort before anything is modified.
template <typename T, typename Pred>
void adam_step(ParamSet<T>& ps, AdamState<T>& st, double lr, const AdamConfig& cfg, Pred trainable) {
  double sq = 0.0;
  for (auto& [name, p] : ps) {
    if (!trainable(name) || !p.has_grad()) continue;
    for (T g : p.grad_view()) {
      if (!std::isfinite(g)) {
        throw DivergenceError("adam: non-finite gradient in " + name + " at step " + std::to_string(st.step + 1));
      }
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = cfg.grad_clip > 0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (auto& [name, p] : ps) {
    if (!trainable(name) || !p.has_grad()) continue;
    auto& m = st.m[name];
    auto& v = st.v[name];
    if (m.empty()) {
      m.assign(static_cast<std::size_t>(p.numel()), T(0));
      v.assign(static_cast<std::size_t>(p.numel()), T(0));
    }
    auto g = p.grad_view();
    auto w = p.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * clip;
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
    }
  }
}

template <typename T>
void adam_step(ParamSet<T>& ps, AdamState<T>& st, double lr, const AdamConfig& cfg = {}) {
  adam_step(ps, st, lr, cfg, [](const std::string&) { return true; });
}

}  // namespace piunet
