#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "cli_support.hpp"
#include "piunet/piunet.hpp"
#include "piunet/testing/checks.hpp"

namespace fs = std::filesystem;
using namespace piunet;
using cli::Manifest;
using nlohmann::ordered_json;

namespace {

// Values given on the command line are stored as config keys and overlay the
// --config file, so every run is described by one flat key/value set.
struct Options {
  std::string config;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  KeyValues flags;
};

void common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  o.seed_opt = sub->add_option("--seed", o.seed, "random seed");
}

void flag(CLI::App* sub, Options& o, const std::string& name, const std::string& key, const std::string& help) {
  sub->add_option_function<std::string>(name, [&o, key](const std::string& v) { o.flags.set(key, v); }, help);
}

KeyValues resolve(const Options& o, const std::string& seed_key) {
  KeyValues kv = cli::merged_config(o.config, o.flags);
  if (o.seed_opt->count() > 0) kv.set(seed_key, o.seed);
  return kv;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
}

std::string precision_of(const KeyValues& kv, const std::string& fallback) {
  const std::string p = kv.get("run.precision", fallback);
  if (p != "f32" && p != "f64") throw ConfigError("run.precision must be f32 or f64, got " + p);
  return p;
}

template <typename Fn>
void with_precision(const std::string& p, Fn&& fn) {
  if (p == "f64") fn(double{});
  else fn(float{});
}

std::vector<SceneRecord> load_scenes(const std::string& root, const std::string& band, const std::string& split) {
  if (fs::exists(fs::path(root) / "manifest.csv")) return load_split(root, band, split);
  return load_dataset(root, band);
}

struct Checkpoint {
  fs::path dir;
  KeyValues echo;
};

Checkpoint open_checkpoint(const std::string& path) {
  Checkpoint c;
  c.dir = fs::is_regular_file(path) ? fs::path(path).parent_path() : fs::path(path);
  if (!fs::exists(c.dir / "params.bin")) throw ArchiveError("checkpoint " + path + " has no params.bin");
  if (!fs::exists(c.dir / "train_config.txt")) throw ArchiveError("checkpoint " + path + " has no train_config.txt");
  c.echo = KeyValues::load((c.dir / "train_config.txt").string());
  return c;
}

// Configuration of a run that consumes a checkpoint: the training echo
// overlaid with the user's config and flags.
KeyValues checkpoint_config(const Checkpoint& ck, const KeyValues& user) {
  KeyValues kv = ck.echo;
  kv.merge(user);
  return kv;
}

std::string metric_text(double v) { return format_metric(v); }

// δ is stored in PNG as a fixed linear map of [kDeltaLow, kDeltaHigh] onto
// 0..65535; the exact values go to the sidecar.
constexpr double kDeltaLow = -10.0, kDeltaHigh = 10.0;

Image<std::uint16_t> delta_png(const ImageF& d) {
  Image<std::uint16_t> out(d.height, d.width);
  for (std::size_t i = 0; i < d.data.size(); ++i) {
    const double t = (d.data[i] - kDeltaLow) / (kDeltaHigh - kDeltaLow);
    out.data[i] = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
  }
  return out;
}

ArchivedTensor plane_tensor(const std::string& name, const ImageF& img) {
  return {name, {img.height, img.width}, DType::kFloat64, img.data};
}

// ---------------------------------------------------------------- gen-data

int run_gen_data(const Options& o, const std::string& out) {
  KeyValues kv = resolve(o, "gen.seed");
  const SyntheticConfig c = SyntheticConfig::from_kv(kv);
  c.validate();
  const auto seed = kv.get_number<std::uint64_t>("gen.seed", 0);
  const auto val = kv.get_number<std::int64_t>("gen.val_scenes", c.scenes / 5);
  if (val < 0 || val > c.scenes) throw ConfigError("gen.val_scenes must be in [0, gen.scenes]");

  const auto scenes = generate_synthetic(c, seed);
  fs::create_directories(out);
  save_dataset(out, scenes);
  DatasetManifest dm;
  std::vector<SceneRecord> train;
  for (std::int64_t i = 0; i < c.scenes; ++i) {
    const bool is_train = i < c.scenes - val;
    dm.entries.push_back({c.band, scenes[i].id, is_train ? "train" : "val"});
    if (is_train) train.push_back(scenes[i]);
  }
  dm.save((fs::path(out) / "manifest.csv").string());

  KeyValues echo = c.to_kv();
  echo.set("gen.seed", seed);
  echo.set("gen.val_scenes", val);
  echo.save((fs::path(out) / "gen_config.txt").string());
  if (!train.empty()) compute_stats(train).to_kv().save((fs::path(out) / "stats.txt").string());

  Manifest m("gen-data", seed);
  m.config(echo);
  m.output("dataset", out);
  m.save(fs::path(out) / "manifest.json");
  std::cout << "wrote " << c.scenes << " scenes (" << c.scenes - val << " train, " << val << " val) to " << out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

int run_train(const Options& o, const std::string& data, const std::string& out) {
  KeyValues kv = resolve(o, "train.seed");
  const ModelConfig mc = ModelConfig::from_kv(kv);
  const TrainConfig tc = TrainConfig::from_kv(kv);
  const PrepConfig prep = PrepConfig::from_kv(kv);
  const std::string band = kv.get("data.band", "synthetic");
  const std::string precision = precision_of(kv, "f32");
  mc.validate();
  tc.validate();

  const auto train = load_scenes(data, band, "train");
  if (train.empty()) throw DatasetError("train: no training scenes for band '" + band + "' under " + data);
  const auto val = fs::exists(fs::path(data) / "manifest.csv") ? load_split(data, band, "val")
                                                               : std::vector<SceneRecord>{};
  const NormalizationStats st = compute_stats(train);
  const auto prepared = prepare_all(train, prep);
  const auto val_prepared = prepare_all(val, prep);

  KeyValues echo = prep.to_kv();
  echo.merge(st.to_kv());
  echo.set("data.band", band);
  echo.set("run.precision", precision);

  KeyValues resolved = mc.to_kv();
  resolved.merge(tc.to_kv());
  resolved.merge(echo);

  fs::create_directories(out);
  double final_val = std::numeric_limits<double>::quiet_NaN();
  std::int64_t steps = 0;
  with_precision(precision, [&](auto tag) {
    using T = decltype(tag);
    Trainer<T> t(mc, tc, training_patches(prepared, st, tc.patch, tc.stride));
    t.set_echo(echo);
    if (!val_prepared.empty()) {
      t.set_validator([&](const ParamSet<T>& ps) { return evaluate_model(val_prepared, ps, mc, st).mean_cpsnr(); });
    }
    const std::int64_t total = t.total_steps();
    const std::int64_t every = std::max<std::int64_t>(1, total / 20);
    t.run(out, -1, [&](const LossPoint& p) {
      if (p.step % every == 0 || p.step == total) {
        std::cout << "step " << p.step << "/" << total << " loss " << metric_text(p.loss);
        if (!std::isnan(p.val_cpsnr)) std::cout << " val_cpsnr " << metric_text(p.val_cpsnr);
        std::cout << std::endl;
      }
    });
    steps = t.step();
    if (!t.curve().empty()) final_val = t.curve().back().val_cpsnr;

    std::vector<double> x, loss;
    for (const auto& p : t.curve()) {
      x.push_back(static_cast<double>(p.step));
      loss.push_back(p.loss);
    }
    if (!x.empty()) {
      write_text(fs::path(out) / "loss_curve.svg",
                 svg_line_plot("training loss", "step", "loss", x, {{"loss", "#1f77b4", loss}}));
    }
  });

  Manifest m("train", tc.seed);
  m.config(resolved);
  m.input("data", data);
  m.output("run", out);
  m.extra()["param_count"] = count_params(mc);
  m.extra()["steps"] = steps;
  m.extra()["train_scenes"] = train.size();
  m.extra()["val_scenes"] = val.size();
  m.extra()["final_val_cpsnr"] = std::isnan(final_val) ? std::string("") : metric_text(final_val);
  m.save(fs::path(out) / "manifest.json");
  std::cout << "checkpoint written to " << (fs::path(out) / "final").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct LoadedRun {
  KeyValues kv;
  std::string precision, band, split;
  PrepConfig prep;
  NormalizationStats stats;
};

LoadedRun load_run(const Options& o, const Checkpoint& ck) {
  LoadedRun r;
  KeyValues user = cli::merged_config(o.config, o.flags);
  r.kv = checkpoint_config(ck, user);
  r.precision = precision_of(r.kv, "f32");
  r.band = r.kv.get("data.band", "synthetic");
  r.split = r.kv.get("eval.split", "val");
  r.prep = PrepConfig::from_kv(r.kv);
  r.stats = NormalizationStats::from_kv(r.kv);
  return r;
}

int run_eval(const Options& o, const std::string& data, const std::string& checkpoint, const std::string& report) {
  const Checkpoint ck = open_checkpoint(checkpoint);
  const LoadedRun run = load_run(o, ck);
  const auto scenes = load_scenes(data, run.band, run.split);
  if (scenes.empty()) throw DatasetError("eval: no '" + run.split + "' scenes for band '" + run.band + "'");
  const auto prepared = prepare_all(scenes, run.prep);

  EvalReport model_rep;
  ModelConfig mc;
  with_precision(run.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto loaded = load_params<T>((ck.dir / "params.bin").string());
    mc = loaded.config;
    model_rep = evaluate_model(prepared, loaded.params, mc, run.stats);
  });
  const EvalReport base_rep = evaluate_baseline(prepared, mc.scale);

  fs::create_directories(report);
  model_rep.save((fs::path(report) / "model.csv").string());
  base_rep.save((fs::path(report) / "baseline.csv").string());
  ordered_json summary;
  summary["scenes"] = model_rep.rows.size();
  summary["model"]["mean_cpsnr"] = metric_text(model_rep.mean_cpsnr());
  summary["model"]["mean_cssim"] = metric_text(model_rep.mean_cssim());
  summary["model"]["infinite_cpsnr"] = model_rep.infinite_count();
  summary["bicubic"]["mean_cpsnr"] = metric_text(base_rep.mean_cpsnr());
  summary["bicubic"]["mean_cssim"] = metric_text(base_rep.mean_cssim());
  summary["bicubic"]["infinite_cpsnr"] = base_rep.infinite_count();
  summary["param_count"] = count_params(mc);
  write_text(fs::path(report) / "summary.json", summary.dump(2) + "\n");

  KeyValues echo = run.kv;
  echo.merge(mc.to_kv());
  const auto seed = o.seed_opt->count() > 0 ? o.seed : 0;
  Manifest m("eval", seed);
  m.config(echo);
  m.input("data", data);
  m.input("checkpoint", ck.dir);
  m.output("report", report);
  m.extra()["param_count"] = count_params(mc);
  m.extra()["summary"] = summary;
  m.save(fs::path(report) / "manifest.json");
  std::cout << "model cPSNR " << metric_text(model_rep.mean_cpsnr()) << " dB, bicubic "
            << metric_text(base_rep.mean_cpsnr()) << " dB over " << model_rep.rows.size() << " scenes\n";
  return 0;
}

// ---------------------------------------------------------------- infer

int run_infer(const Options& o, const std::string& scene_dir, const std::string& checkpoint, const std::string& out) {
  const Checkpoint ck = open_checkpoint(checkpoint);
  const LoadedRun run = load_run(o, ck);
  const fs::path dir = fs::path(scene_dir).lexically_normal();
  const std::string band = dir.has_parent_path() ? dir.parent_path().filename().string() : run.band;
  const SceneRecord scene = load_scene(dir, band);
  const PreparedScene prepared = prepare_scene(scene, run.prep);

  Prediction pred;
  with_precision(run.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto loaded = load_params<T>((ck.dir / "params.bin").string());
    pred = predict(prepared.scene, loaded.params, loaded.config, run.stats);
  });

  fs::create_directories(out);
  write_png_gray((fs::path(out) / "sr.png").string(), quantize16(pred.sr), 16);
  write_png_gray((fs::path(out) / "delta.png").string(), delta_png(pred.delta), 16);
  Archive side;
  side.meta.set("scene", scene.id);
  side.meta.set("sr.units", "16-bit intensity");
  side.meta.set("delta.units", "log scale, normalized intensity");
  side.meta.set("delta_png.low", kDeltaLow);
  side.meta.set("delta_png.high", kDeltaHigh);
  side.meta.set("degraded", prepared.degraded);
  side.tensors.push_back(plane_tensor("sr", pred.sr));
  side.tensors.push_back(plane_tensor("delta", pred.delta));
  write_archive((fs::path(out) / "prediction.bin").string(), side);

  const auto seed = o.seed_opt->count() > 0 ? o.seed : 0;
  Manifest m("infer", seed);
  m.config(run.kv);
  m.input("scene", dir);
  m.input("checkpoint", ck.dir);
  m.output("prediction", out);
  m.extra()["degraded"] = prepared.degraded;
  m.save(fs::path(out) / "manifest.json");
  std::cout << "wrote " << pred.sr.height << "x" << pred.sr.width << " prediction to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------- sparsify

int run_sparsify(const Options& o, const std::string& data, const std::string& checkpoint, const std::string& out) {
  const Checkpoint ck = open_checkpoint(checkpoint);
  const LoadedRun run = load_run(o, ck);
  const auto scenes = load_scenes(data, run.band, run.split);
  if (scenes.empty()) throw DatasetError("sparsify: no '" + run.split + "' scenes for band '" + run.band + "'");
  const auto prepared = prepare_all(scenes, run.prep);
  const auto seed = o.seed_opt->count() > 0 ? o.seed : 0;
  const int random_seeds = run.kv.get_number("sparsify.random_seeds", 10);

  std::vector<SparsificationCurves> curves;
  std::ostringstream per_scene;
  per_scene << "scene,oracle_gap,random_gain\n";
  with_precision(run.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto loaded = load_params<T>((ck.dir / "params.bin").string());
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      const auto& s = prepared[i];
      if (!s.has_hr) throw DatasetError("sparsify: scene " + s.id + " has no HR image");
      const Prediction p = predict(s, loaded.params, loaded.config, run.stats);
      curves.push_back(curve_baselines(p.sr, p.delta, s.hr, s.sm, {}, default_fractions(), mix_seed(seed, i),
                                       random_seeds));
      per_scene << s.id << ',' << metric_text(curves.back().oracle_gap()) << ','
                << metric_text(curves.back().random_gain()) << '\n';
    }
  });
  const SparsificationCurves avg = average_curves(curves);
  bool dominated = true;
  for (std::size_t i = 0; i < avg.fractions.size(); ++i) dominated = dominated && avg.oracle[i] >= avg.model[i];

  fs::create_directories(out);
  write_text(fs::path(out) / "curves.csv", avg.csv());
  write_text(fs::path(out) / "per_scene.csv", per_scene.str());
  write_text(fs::path(out) / "curves.svg",
             svg_line_plot("sparsification", "fraction removed", "cPSNR (dB)", avg.fractions,
                           {{"model", "#1f77b4", avg.model}, {"random", "#7f7f7f", avg.random},
                            {"oracle", "#d62728", avg.oracle}}));
  ordered_json summary;
  summary["scenes"] = curves.size();
  summary["oracle_gap"] = metric_text(avg.oracle_gap());
  summary["random_gain"] = metric_text(avg.random_gain());
  summary["oracle_dominates"] = dominated;
  write_text(fs::path(out) / "summary.json", summary.dump(2) + "\n");

  Manifest m("sparsify", seed);
  m.config(run.kv);
  m.input("data", data);
  m.input("checkpoint", ck.dir);
  m.output("curves", out);
  m.extra()["summary"] = summary;
  m.save(fs::path(out) / "manifest.json");
  std::cout << "random_gain " << metric_text(avg.random_gain()) << " dB, oracle_gap "
            << metric_text(avg.oracle_gap()) << " dB\n";
  return 0;
}

// ---------------------------------------------------------------- check

int run_check(const Options& o, const std::string& level, const std::string& out) {
  const KeyValues kv = resolve(o, "check.seed");
  const auto seed = kv.get_number<std::uint64_t>("check.seed", 0);
  const bool full = level == "full";
  std::vector<checks::Outcome> all;
  const auto add = [&](std::vector<checks::Outcome> v) {
    for (auto& x : v) {
      std::printf("%s %s measured=%.3e tol=%.1e %s\n", x.passed ? "PASS" : "FAIL", x.name.c_str(), x.measured,
                  x.tolerance, x.detail.c_str());
      std::fflush(stdout);
      all.push_back(std::move(x));
    }
  };

  checks::EquivarianceOptions eq;
  eq.seed += seed;
  if (!full) {
    eq.permutations = 5;
    eq.inputs = 3;
  }
  add(checks::equivariance_suite(eq));

  checks::InvarianceOptions inv;
  inv.seed += seed;
  inv.permutations = full ? 20 : 3;
  add({checks::invariance_check(inv)});
  inv.frame_counts.clear();
  if (full) {
    for (std::int64_t t = 1; t <= 16; ++t) inv.frame_counts.push_back(t);
  } else {
    inv.frame_counts = {1, 2, 5, 16};
  }
  auto all_t = checks::invariance_check(inv);
  all_t.name += " (all frame counts)";
  add({all_t});

  add(checks::gradient_suite(full ? 20 : 2, 1e-6, 1 + seed));
  if (full) add({checks::end_to_end_gradient(3 + seed)});
  add(checks::oracle_suite(full ? 50 : 10, 5 + seed));

  const auto failed = std::count_if(all.begin(), all.end(), [](const auto& x) { return !x.passed; });
  fs::create_directories(out);
  std::ostringstream report;
  for (const auto& x : all) report << (x.passed ? "PASS " : "FAIL ") << x.name << '\n';
  write_text(fs::path(out) / "check.txt", report.str());
  Manifest m("check", seed);
  KeyValues echo = kv;
  echo.set("check.level", level);
  m.config(echo);
  m.output("check", out);
  m.extra()["checks"] = all.size();
  m.extra()["failed"] = failed;
  m.save(fs::path(out) / "manifest.json");
  std::printf("%zu checks, %ld failed\n", all.size(), static_cast<long>(failed));
  return failed == 0 ? 0 : 1;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 3;
  if (dynamic_cast<const DatasetError*>(&e) || dynamic_cast<const ImageIoError*>(&e)) return 4;
  if (dynamic_cast<const ArchiveError*>(&e) || dynamic_cast<const ParamMismatchError*>(&e)) return 5;
  if (dynamic_cast<const DivergenceError*>(&e)) return 6;
  return 7;
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const MissingMaskError*>(&e)) return "missing_mask";
  if (dynamic_cast<const SizeMismatchError*>(&e)) return "size_mismatch";
  if (dynamic_cast<const UnreadableFileError*>(&e)) return "unreadable_file";
  if (dynamic_cast<const DatasetError*>(&e)) return "dataset";
  if (dynamic_cast<const ImageIoError*>(&e)) return "image_io";
  if (dynamic_cast<const ParamMismatchError*>(&e)) return "param_mismatch";
  if (dynamic_cast<const ArchiveError*>(&e)) return "archive";
  if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
  if (dynamic_cast<const NonFiniteError*>(&e)) return "non_finite";
  return "runtime";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Permutation-invariant multi-frame super-resolution with uncertainty"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kVersion);

  Options gen_o, train_o, eval_o, infer_o, sparse_o, check_o;
  std::string gen_out, train_data, train_out, eval_data, eval_ckpt, eval_report;
  std::string infer_scene, infer_ckpt, infer_out, sparse_data, sparse_ckpt, sparse_out;
  std::string check_level = "quick", check_out = "piunet-check";

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-frame dataset");
  common(gen, gen_o);
  gen->add_option("--out", gen_out, "output dataset root")->required();
  flag(gen, gen_o, "--scenes", "gen.scenes", "number of scenes");
  flag(gen, gen_o, "--val-scenes", "gen.val_scenes", "scenes assigned to the val split (default scenes/5)");
  flag(gen, gen_o, "--T", "gen.frames", "frames per scene");
  flag(gen, gen_o, "--lr-size", "gen.lr_size", "low-resolution side length");
  flag(gen, gen_o, "--scale", "gen.scale", "upscaling factor");
  flag(gen, gen_o, "--change-rate", "gen.change_rate", "probability of a content change per frame");
  flag(gen, gen_o, "--occlusion-rate", "gen.occlusion_rate", "expected occluded fraction per frame");
  flag(gen, gen_o, "--noise", "gen.noise_sigma", "noise standard deviation (16-bit units)");
  flag(gen, gen_o, "--band", "gen.band", "band name");

  auto* train = app.add_subcommand("train", "train a model");
  common(train, train_o);
  train->add_option("--data", train_data, "dataset root")->required();
  train->add_option("--out", train_out, "run directory")->required();
  flag(train, train_o, "--band", "data.band", "band to train on");
  flag(train, train_o, "--loss", "train.loss", "nll or l1");
  flag(train, train_o, "--tefa", "model.n_tefa", "number of attention blocks");
  flag(train, train_o, "--features", "model.features", "feature channels");
  flag(train, train_o, "--bottleneck", "model.bottleneck", "attention bottleneck width");
  flag(train, train_o, "--tern-kernel", "model.tern_kernel", "dynamic filter size");
  flag(train, train_o, "--epochs", "train.epochs", "epochs (0 writes an untrained checkpoint)");
  flag(train, train_o, "--steps", "train.steps", "steps, overrides --epochs when positive");
  flag(train, train_o, "--batch", "train.batch", "batch size");
  flag(train, train_o, "--lr", "train.lr", "learning rate");
  flag(train, train_o, "--lr-final", "train.lr_final", "learning rate for the final steps");
  flag(train, train_o, "--patch", "train.patch", "LR patch size");
  flag(train, train_o, "--stride", "train.stride", "LR patch stride");
  flag(train, train_o, "--frames", "data.frames", "frames per scene fed to the model");
  flag(train, train_o, "--eval-interval", "train.eval_interval", "validate every N steps");
  flag(train, train_o, "--checkpoint-interval", "train.checkpoint_interval", "checkpoint every N steps");
  flag(train, train_o, "--precision", "run.precision", "f32 or f64");

  auto* eval = app.add_subcommand("eval", "score a checkpoint and the bicubic baseline");
  common(eval, eval_o);
  eval->add_option("--data", eval_data, "dataset root")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  eval->add_option("--report", eval_report, "report directory")->required();
  flag(eval, eval_o, "--split", "eval.split", "manifest split to score (default val)");
  flag(eval, eval_o, "--precision", "run.precision", "f32 or f64");

  auto* infer = app.add_subcommand("infer", "super-resolve one scene");
  common(infer, infer_o);
  infer->add_option("--scene-dir", infer_scene, "scene directory")->required();
  infer->add_option("--checkpoint", infer_ckpt, "checkpoint directory")->required();
  infer->add_option("--out", infer_out, "output directory")->required();
  flag(infer, infer_o, "--precision", "run.precision", "f32 or f64");

  auto* sparse = app.add_subcommand("sparsify", "sparsification curves of the uncertainty map");
  common(sparse, sparse_o);
  sparse->add_option("--data", sparse_data, "dataset root")->required();
  sparse->add_option("--checkpoint", sparse_ckpt, "checkpoint directory")->required();
  sparse->add_option("--out", sparse_out, "output directory")->required();
  flag(sparse, sparse_o, "--split", "eval.split", "manifest split (default val)");
  flag(sparse, sparse_o, "--precision", "run.precision", "f32 or f64");

  auto* check = app.add_subcommand("check", "numerical self-checks");
  common(check, check_o);
  check->add_option("--level", check_level, "quick or full")->check(CLI::IsMember({"quick", "full"}));
  check->add_option("--out", check_out, "output directory");

  std::string command = argc > 1 ? argv[1] : "piunet";
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << cli::error_record(command, "usage", e.what()) << std::endl;
    return 2;
  }

  for (auto* sub : app.get_subcommands()) command = sub->get_name();
  try {
    if (gen->parsed()) return run_gen_data(gen_o, gen_out);
    if (train->parsed()) return run_train(train_o, train_data, train_out);
    if (eval->parsed()) return run_eval(eval_o, eval_data, eval_ckpt, eval_report);
    if (infer->parsed()) return run_infer(infer_o, infer_scene, infer_ckpt, infer_out);
    if (sparse->parsed()) return run_sparsify(sparse_o, sparse_data, sparse_ckpt, sparse_out);
    if (check->parsed()) return run_check(check_o, check_level, check_out);
  } catch (const std::exception& e) {
    std::cerr << cli::error_record(command, error_type(e), e.what()) << std::endl;
    return exit_code(e);
  }
  return 2;
}
