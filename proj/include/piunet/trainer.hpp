#pragma once

// Training loop.
//
// Batches are a pure function of (seed, step): each epoch draws a fresh
// permutation of the patch list from (seed, epoch) and each sample its
// rotation from (seed, step, slot). Resuming therefore needs only the
// parameters, the optimizer state and the step counter.
//
// A checkpoint directory holds params.bin (model archive), optim.bin (Adam
// moments, step and the reference loss of the divergence check) and
// train_config.txt (echo of the configuration).

#include <filesystem>
#include <functional>

#include "piunet/adam.hpp"
#include "piunet/evaluation.hpp"
#include "piunet/losses.hpp"

namespace piunet {

enum class LossKind { kNll, kL1 };

struct TrainConfig {
  LossKind loss = LossKind::kNll;
  double lr = 1e-4;
  double lr_final = 2e-5;
  double final_fraction = 0.1;  // share of steps run at lr_final
  std::int64_t epochs = 1;
  std::int64_t steps = 0;  // overrides epochs when positive
  std::int64_t batch = 8;
  std::uint64_t seed = 0;
  std::int64_t eval_interval = 0;        // 0 = only at the end
  std::int64_t checkpoint_interval = 0;  // 0 = only at the end
  std::int64_t patch = 32;
  std::int64_t stride = 32;
  bool augment = true;
  double grad_clip = 0.0;
  double divergence_factor = 1e3;
  ShiftSearchConfig shift;

  void validate() const {
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (!(lr > 0) || lr_final > lr || lr_final < 0) throw ConfigError("train: need 0 <= lr_final <= lr, lr > 0");
    if (final_fraction < 0 || final_fraction > 1) throw ConfigError("train: final_fraction must be in [0, 1]");
    if (epochs < 0 || steps < 0) throw ConfigError("train: epochs and steps must be non-negative");
    if (patch < 1 || stride < 1) throw ConfigError("train: patch and stride must be positive");
    shift.validate();
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("train.loss", loss == LossKind::kNll ? "nll" : "l1");
    kv.set("train.lr", lr);
    kv.set("train.lr_final", lr_final);
    kv.set("train.final_fraction", final_fraction);
    kv.set("train.epochs", epochs);
    kv.set("train.steps", steps);
    kv.set("train.batch", batch);
    kv.set("train.seed", seed);
    kv.set("train.eval_interval", eval_interval);
    kv.set("train.checkpoint_interval", checkpoint_interval);
    kv.set("train.patch", patch);
    kv.set("train.stride", stride);
    kv.set("train.augment", augment);
    kv.set("train.grad_clip", grad_clip);
    kv.set("train.divergence_factor", divergence_factor);
    kv.set("train.max_shift", shift.max_shift);
    kv.set("train.crop", shift.crop);
    kv.set("train.shift_reduction", shift.reduction == ShiftReduction::kBatch ? "batch" : "per_image");
    return kv;
  }

  static TrainConfig from_kv(const KeyValues& kv) { return from_kv(kv, TrainConfig()); }
  static TrainConfig from_kv(const KeyValues& kv, TrainConfig c) {
    const auto loss = kv.get("train.loss", c.loss == LossKind::kNll ? "nll" : "l1");
    if (loss == "nll") c.loss = LossKind::kNll;
    else if (loss == "l1") c.loss = LossKind::kL1;
    else throw ConfigError("train.loss must be nll or l1, got " + loss);
    c.lr = kv.get_number("train.lr", c.lr);
    c.lr_final = kv.get_number("train.lr_final", c.lr_final);
    c.final_fraction = kv.get_number("train.final_fraction", c.final_fraction);
    c.epochs = kv.get_number("train.epochs", c.epochs);
    c.steps = kv.get_number("train.steps", c.steps);
    c.batch = kv.get_number("train.batch", c.batch);
    c.seed = kv.get_number("train.seed", c.seed);
    c.eval_interval = kv.get_number("train.eval_interval", c.eval_interval);
    c.checkpoint_interval = kv.get_number("train.checkpoint_interval", c.checkpoint_interval);
    c.patch = kv.get_number("train.patch", c.patch);
    c.stride = kv.get_number("train.stride", c.stride);
    c.augment = kv.get_bool("train.augment", c.augment);
    c.grad_clip = kv.get_number("train.grad_clip", c.grad_clip);
    c.divergence_factor = kv.get_number("train.divergence_factor", c.divergence_factor);
    c.shift.max_shift = kv.get_number("train.max_shift", c.shift.max_shift);
    c.shift.crop = kv.get_number("train.crop", c.shift.crop);
    const auto red = kv.get("train.shift_reduction", c.shift.reduction == ShiftReduction::kBatch ? "batch" : "per_image");
    if (red == "batch") c.shift.reduction = ShiftReduction::kBatch;
    else if (red == "per_image") c.shift.reduction = ShiftReduction::kPerImage;
    else throw ConfigError("train.shift_reduction must be batch or per_image");
    return c;
  }
};

/// splitmix64 finalizer, used to derive independent seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL ^ (b + 0x632BE59BD9B4E019ULL) * 0xBF58476D1CE4E5B9ULL ^
                    (c + 0x8CB92BA72F3D8DD7ULL) * 0x94D049BB133111EBULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Normalized training patches from prepared scenes.
inline std::vector<Patch> training_patches(const std::vector<SceneRecord>& prepared, const NormalizationStats& st,
                                           std::int64_t size, std::int64_t stride) {
  std::vector<Patch> out;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    for (auto& p : extract_patches(prepared[i], static_cast<std::int64_t>(i), size, stride)) {
      for (auto& f : p.lr) f = normalize(f, st);
      p.hr = normalize(p.hr, st);
      out.push_back(std::move(p));
    }
  }
  return out;
}

template <typename T>
struct Batch {
  Tensor<T> lr;    // [B, T, 1, p, p]
  Tensor<T> hr;    // [B, 1, rp, rp]
  Tensor<T> mask;  // [B, 1, rp, rp]
};

template <typename T>
Batch<T> make_batch(const std::vector<const Patch*>& items, const std::vector<int>& rotations) {
  const Patch& first = *items.front();
  const auto B = static_cast<std::int64_t>(items.size());
  const auto frames = static_cast<std::int64_t>(first.lr.size());
  const std::int64_t p = first.lr[0].height, hp = first.hr.height;
  std::vector<T> lr, hr, mask;
  lr.reserve(static_cast<std::size_t>(B * frames * p * p));
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Patch q = rotations[i] ? rotate_augment(*items[i], rotations[i]) : *items[i];
    if (static_cast<std::int64_t>(q.lr.size()) != frames || q.hr.height != hp) {
      throw ShapeError("make_batch: patches differ in frame count or size");
    }
    for (const auto& f : q.lr)
      for (double v : f.data) lr.push_back(static_cast<T>(v));
    for (double v : q.hr.data) hr.push_back(static_cast<T>(v));
    for (auto m : q.sm.data) mask.push_back(m ? T(1) : T(0));
  }
  return {Tensor<T>::from({B, frames, 1, p, p}, std::move(lr)), Tensor<T>::from({B, 1, hp, hp}, std::move(hr)),
          Tensor<T>::from({B, 1, hp, hp}, std::move(mask))};
}

struct LossPoint {
  std::int64_t step;
  double loss;
  double lr;
  double val_cpsnr;  // NaN when not evaluated at this step
};

template <typename T>
class Trainer {
 public:
  using Validator = std::function<double(const ParamSet<T>&)>;

  Trainer(ModelConfig mc, TrainConfig tc, std::vector<Patch> patches)
      : mc_(mc), tc_(tc), patches_(std::move(patches)) {
    mc_.validate();
    tc_.validate();
    if (patches_.empty() && (tc_.steps > 0 || tc_.epochs > 0)) {
      throw ConfigError("train: no training patches (is the patch size larger than the LR frames?)");
    }
    params_ = declare_params<T>(mc_);
    init_params(params_, tc_.seed);
  }

  std::int64_t steps_per_epoch() const {
    const auto n = static_cast<std::int64_t>(patches_.size());
    return std::max<std::int64_t>(1, (n + tc_.batch - 1) / tc_.batch);
  }
  std::int64_t total_steps() const { return tc_.steps > 0 ? tc_.steps : tc_.epochs * steps_per_epoch(); }
  std::int64_t step() const { return opt_.step; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  const ModelConfig& model_config() const { return mc_; }
  const TrainConfig& train_config() const { return tc_; }
  const std::vector<LossPoint>& curve() const { return curve_; }
  void set_validator(Validator v) { validator_ = std::move(v); }

  double lr_at(std::int64_t s) const {
    const auto total = total_steps();
    const auto drop = static_cast<std::int64_t>(std::ceil(static_cast<double>(total) * (1.0 - tc_.final_fraction)));
    return s >= drop ? tc_.lr_final : tc_.lr;
  }

  /// Patch indices and rotations used at 0-based step `s`.
  void batch_plan(std::int64_t s, std::vector<std::size_t>& idx, std::vector<int>& rot) const {
    const auto n = patches_.size();
    const std::int64_t epoch = s / steps_per_epoch(), within = s % steps_per_epoch();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(tc_.seed, 1, static_cast<std::uint64_t>(epoch)));
    std::shuffle(perm.begin(), perm.end(), rng);
    idx.clear();
    rot.clear();
    for (std::int64_t i = 0; i < tc_.batch; ++i) {
      idx.push_back(perm[static_cast<std::size_t>(within * tc_.batch + i) % n]);
      rot.push_back(tc_.augment ? static_cast<int>(mix_seed(tc_.seed, 2 + static_cast<std::uint64_t>(s),
                                                            static_cast<std::uint64_t>(i)) % 4)
                                : 0);
    }
  }

  bool trainable(const std::string& name) const {
    return tc_.loss == LossKind::kNll || !is_uncertainty_param(name);
  }

  /// Loss of the current parameters on the batch of step `s`, graph attached.
  Tensor<T> batch_loss(std::int64_t s) {
    std::vector<std::size_t> idx;
    std::vector<int> rot;
    batch_plan(s, idx, rot);
    std::vector<const Patch*> items;
    for (auto i : idx) items.push_back(&patches_[i]);
    const Batch<T> b = make_batch<T>(items, rot);
    const SrOutput<T> out = forward(b.lr, params_, mc_);
    if (tc_.loss == LossKind::kNll) return registered_nll(out.sr, out.delta, b.hr, b.mask, tc_.shift);
    return l1_registered(out.sr, b.hr, b.mask, tc_.shift);
  }

  /// One optimization step; returns the loss before the update.
  double train_step() {
    const std::int64_t s = opt_.step;
    params_.zero_grad();
    Tensor<T> loss = batch_loss(s);
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
      throw DivergenceError("train: loss is not finite at step " + std::to_string(s + 1));
    }
    if (!has_reference_) {
      reference_loss_ = value;
      has_reference_ = true;
    }
    const double limit = tc_.divergence_factor * std::max(std::abs(reference_loss_), 1e-3);
    if (value > limit) {
      throw DivergenceError("train: loss " + std::to_string(value) + " at step " + std::to_string(s + 1) +
                            " exceeds " + std::to_string(tc_.divergence_factor) + " x the initial loss " +
                            std::to_string(reference_loss_));
    }
    loss.backward();
    AdamConfig ac;
    ac.grad_clip = tc_.grad_clip;
    const double lr = lr_at(s);
    adam_step(params_, opt_, lr, ac, [this](const std::string& n) { return trainable(n); });
    params_.zero_grad();
    curve_.push_back({s + 1, value, lr, std::numeric_limits<double>::quiet_NaN()});
    return value;
  }

  /// Runs until `until` steps (default: total_steps()). Checkpoints go to
  /// out_dir/checkpoints/step_NNNNNN and out_dir/final when out_dir is set.
  void run(const std::string& out_dir = "", std::int64_t until = -1,
           const std::function<void(const LossPoint&)>& on_step = {}) {
    const std::int64_t end = until < 0 ? total_steps() : std::min(until, total_steps());
    while (opt_.step < end) {
      train_step();
      const std::int64_t s = opt_.step;
      const bool last = s == total_steps();
      if (validator_ && ((tc_.eval_interval > 0 && s % tc_.eval_interval == 0) || last)) {
        curve_.back().val_cpsnr = validator_(params_);
      }
      if (!out_dir.empty() && tc_.checkpoint_interval > 0 && s % tc_.checkpoint_interval == 0 && !last) {
        char name[32];
        std::snprintf(name, sizeof name, "step_%06lld", static_cast<long long>(s));
        save_checkpoint((std::filesystem::path(out_dir) / "checkpoints" / name).string());
      }
      if (on_step) on_step(curve_.back());
    }
    if (!out_dir.empty()) {
      save_checkpoint((std::filesystem::path(out_dir) / "final").string());
      save_curve((std::filesystem::path(out_dir) / "loss_curve.csv").string());
    }
  }

  void save_checkpoint(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    save_params((std::filesystem::path(dir) / "params.bin").string(), params_, mc_);
    Archive opt = opt_.to_archive();
    opt.meta.set("train.reference_loss", reference_loss_);
    opt.meta.set("train.has_reference", has_reference_);
    write_archive((std::filesystem::path(dir) / "optim.bin").string(), opt);
    KeyValues echo = mc_.to_kv();
    echo.merge(tc_.to_kv());
    echo.merge(extra_echo_);
    echo.save((std::filesystem::path(dir) / "train_config.txt").string());
  }

  /// Restores parameters and optimizer state; the configuration must match.
  void load_checkpoint(const std::string& dir) {
    params_ = load_params<T>((std::filesystem::path(dir) / "params.bin").string(), mc_);
    const Archive ar = read_archive((std::filesystem::path(dir) / "optim.bin").string());
    opt_ = AdamState<T>::from_archive(ar);
    reference_loss_ = ar.meta.get_number("train.reference_loss", 0.0);
    has_reference_ = ar.meta.get_bool("train.has_reference", false);
  }

  /// Extra key/values echoed into train_config.txt (data settings, stats).
  void set_echo(KeyValues kv) { extra_echo_ = std::move(kv); }

  std::string curve_csv() const {
    std::ostringstream os;
    os << "step,loss,lr,val_cpsnr\n";
    for (const auto& p : curve_) {
      os << p.step << ',' << format_metric(p.loss) << ',' << format_metric(p.lr) << ',';
      if (!std::isnan(p.val_cpsnr)) os << format_metric(p.val_cpsnr);
      os << '\n';
    }
    return os.str();
  }

  void save_curve(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write loss curve " + path);
    f << curve_csv();
  }

 private:
  ModelConfig mc_;
  TrainConfig tc_;
  std::vector<Patch> patches_;
  ParamSet<T> params_;
  AdamState<T> opt_;
  double reference_loss_ = 0.0;
  bool has_reference_ = false;
  std::vector<LossPoint> curve_;
  Validator validator_;
  KeyValues extra_echo_;
};

/// Continues training a checkpoint on patches prepared with `frames` per
/// scene. Optimizer state carries over; `steps` more updates are run.
template <typename T>
Trainer<T> finetune_frames(const std::string& checkpoint_dir, const ModelConfig& mc, TrainConfig tc,
                           const std::vector<SceneRecord>& scenes, const NormalizationStats& st, PrepConfig prep,
                           std::int64_t frames, std::int64_t steps) {
  prep.frames = frames;
  auto patches = training_patches(prepare_all(scenes, prep), st, tc.patch, tc.stride);
  const Archive opt = read_archive((std::filesystem::path(checkpoint_dir) / "optim.bin").string());
  tc.steps = opt.meta.require_number<std::int64_t>("adam.step") + steps;
  Trainer<T> t(mc, tc, std::move(patches));
  t.load_checkpoint(checkpoint_dir);
  t.run("", tc.steps);
  return t;
}

}  // namespace piunet
