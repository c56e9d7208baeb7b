#pragma once

// Whole-scene inference and scoring.

#include "piunet/baseline.hpp"
#include "piunet/metrics.hpp"
#include "piunet/model.hpp"
#include "piunet/preprocess.hpp"

namespace piunet {

/// Model outputs for one scene. `sr` is on the 16-bit intensity scale,
/// `delta` is the log-scale map in normalized units.
struct Prediction {
  ImageF sr;
  ImageF delta;
};

template <typename T>
Tensor<T> stack_frames(const std::vector<ImageF>& frames, const NormalizationStats& st) {
  if (frames.empty()) throw ShapeError("stack_frames: no frames");
  const std::int64_t h = frames[0].height, w = frames[0].width;
  std::vector<T> vals;
  vals.reserve(frames.size() * static_cast<std::size_t>(h * w));
  for (const auto& f : frames) {
    if (!f.same_size(h, w)) throw ShapeError("stack_frames: frames differ in size");
    for (double v : f.data) vals.push_back(static_cast<T>((v - st.mean) / st.std));
  }
  return Tensor<T>::from({1, static_cast<std::int64_t>(frames.size()), 1, h, w}, std::move(vals));
}

template <typename T>
ImageF tensor_plane(const Tensor<T>& t, std::int64_t b = 0) {
  const std::int64_t h = t.dim(-2), w = t.dim(-1);
  ImageF out(h, w);
  const auto vals = t.values();
  for (std::int64_t i = 0; i < h * w; ++i) out.data[static_cast<std::size_t>(i)] = static_cast<double>(vals[b * h * w + i]);
  return out;
}

/// Runs the model on the (already registered) frames of a scene.
template <typename T>
Prediction predict(const SceneRecord& s, const ParamSet<T>& ps, const ModelConfig& mc, const NormalizationStats& st) {
  NoGradGuard ng;
  const SrOutput<T> out = forward(stack_frames<T>(s.lr, st), ps, mc);
  return {denormalize(tensor_plane(out.sr), st), tensor_plane(out.delta)};
}

template <typename T>
EvalReport evaluate_model(const std::vector<SceneRecord>& scenes, const ParamSet<T>& ps, const ModelConfig& mc,
                          const NormalizationStats& st, const ShiftSearchConfig& cfg = {}) {
  EvalReport rep;
  for (const auto& s : scenes) {
    if (!s.has_hr) throw DatasetError("evaluate: scene " + s.id + " has no HR image");
    rep.rows.push_back(score_scene(s.id, predict(s, ps, mc, st).sr, s.hr, s.sm, cfg));
  }
  return rep;
}

inline EvalReport evaluate_baseline(const std::vector<SceneRecord>& scenes, std::int64_t r,
                                    const ShiftSearchConfig& cfg = {}) {
  EvalReport rep;
  for (const auto& s : scenes) {
    if (!s.has_hr) throw DatasetError("evaluate: scene " + s.id + " has no HR image");
    rep.rows.push_back(score_scene(s.id, bicubic_average(s, r), s.hr, s.sm, cfg));
  }
  return rep;
}

inline std::vector<SceneRecord> prepare_all(const std::vector<SceneRecord>& scenes, const PrepConfig& c) {
  std::vector<SceneRecord> out;
  for (const auto& s : scenes) out.push_back(prepare_scene(s, c).scene);
  return out;
}

}  // namespace piunet
