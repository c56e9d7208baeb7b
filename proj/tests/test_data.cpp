#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "piunet/piunet.hpp"
#include "piunet/testing/oracles.hpp"

using namespace piunet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("piunet_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SyntheticConfig tiny_config() {
  SyntheticConfig c;
  c.scenes = 3;
  c.frames = 4;
  c.lr_size = 12;
  return c;
}

SceneRecord ramp_scene(std::int64_t frames, std::int64_t n, std::int64_t r) {
  SceneRecord s;
  s.id = "ramp";
  for (std::int64_t t = 0; t < frames; ++t) {
    ImageF img(n, n);
    for (std::int64_t i = 0; i < img.size(); ++i) img.data[static_cast<std::size_t>(i)] = 100.0 * t + i;
    s.lr.push_back(img);
    s.qm.push_back(Mask(n, n, 1));
  }
  s.has_hr = true;
  s.hr = ImageF(n * r, n * r, 7.0);
  s.sm = Mask(n * r, n * r, 1);
  return s;
}

}  // namespace

TEST(Png, SixteenBitRoundTrip) {
  const auto dir = fresh_dir("png");
  Image<std::uint16_t> img(5, 7);
  for (std::int64_t i = 0; i < img.size(); ++i) img.data[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(i * 1871);
  write_png_gray((dir / "a.png").string(), img, 16);
  int depth = 0;
  const auto back = read_png_gray((dir / "a.png").string(), &depth);
  EXPECT_EQ(depth, 16);
  EXPECT_EQ(back.data, img.data);
}

TEST(Png, QuantizeRoundsAndClamps) {
  ImageF f(1, 4);
  f.data = {-3.0, 1.4999, 1.5, 70000.0};
  EXPECT_EQ(quantize16(f).data, (std::vector<std::uint16_t>{0, 1, 2, 65535}));
}

TEST(Png, UnreadableFileThrows) {
  const auto dir = fresh_dir("png_bad");
  std::ofstream(dir / "bad.png") << "not a png";
  EXPECT_THROW(read_png_gray((dir / "bad.png").string()), ImageIoError);
  EXPECT_THROW(read_png_gray((dir / "missing.png").string()), ImageIoError);
}

TEST(Dataset, SceneRoundTrip) {
  const auto dir = fresh_dir("scene");
  const auto scenes = generate_synthetic(tiny_config(), 5);
  save_dataset(dir.string(), scenes);
  const auto back = load_dataset(dir.string(), "synthetic");
  ASSERT_EQ(back.size(), scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    EXPECT_EQ(back[i].id, scenes[i].id);
    ASSERT_EQ(back[i].frames(), scenes[i].frames());
    for (std::size_t t = 0; t < scenes[i].lr.size(); ++t) {
      EXPECT_EQ(back[i].lr[t].data, scenes[i].lr[t].data);
      EXPECT_EQ(back[i].qm[t].data, scenes[i].qm[t].data);
    }
    EXPECT_EQ(back[i].hr.data, scenes[i].hr.data);
    EXPECT_EQ(back[i].scale(), 3);
  }
}

TEST(Dataset, MissingMaskIsReported) {
  const auto dir = fresh_dir("nomask");
  save_scene(dir / "s", generate_scene(tiny_config(), 1, 0));
  fs::remove(dir / "s" / "QM002.png");
  EXPECT_THROW(load_scene(dir / "s", "synthetic"), MissingMaskError);
}

TEST(Dataset, MissingStatusMaskIsReported) {
  const auto dir = fresh_dir("nosm");
  save_scene(dir / "s", generate_scene(tiny_config(), 1, 0));
  fs::remove(dir / "s" / "SM.png");
  EXPECT_THROW(load_scene(dir / "s", "synthetic"), MissingMaskError);
}

TEST(Dataset, SizeMismatchIsReported) {
  const auto dir = fresh_dir("mismatch");
  save_scene(dir / "s", generate_scene(tiny_config(), 1, 0));
  write_png_gray((dir / "s" / "LR001.png").string(), Image<std::uint16_t>(10, 12), 16);
  EXPECT_THROW(load_scene(dir / "s", "synthetic"), SizeMismatchError);
}

TEST(Dataset, CorruptFrameIsReported) {
  const auto dir = fresh_dir("corrupt");
  save_scene(dir / "s", generate_scene(tiny_config(), 1, 0));
  std::ofstream(dir / "s" / "LR000.png", std::ios::trunc) << "garbage";
  EXPECT_THROW(load_scene(dir / "s", "synthetic"), UnreadableFileError);
}

TEST(Dataset, ManifestRoundTripAndSplits) {
  const auto dir = fresh_dir("manifest");
  DatasetManifest m;
  m.entries = {{"NIR", "imgset0001", "train"}, {"NIR", "imgset0002", "val"}, {"RED", "imgset0003", "train"}};
  m.save((dir / "manifest.csv").string());
  const auto back = DatasetManifest::load((dir / "manifest.csv").string());
  EXPECT_EQ(back.entries, m.entries);
  EXPECT_EQ(back.scenes("NIR", "train"), std::vector<std::string>{"imgset0001"});
  std::ofstream(dir / "bad.csv") << "scene,band\n";
  EXPECT_THROW(DatasetManifest::load((dir / "bad.csv").string()), DatasetError);
}

TEST(Preprocess, ClearanceThresholdIsStrict) {
  SceneRecord s = ramp_scene(3, 10, 3);
  // 15 of 100 pixels occluded in frame 0: exactly at the threshold, dropped
  for (int i = 0; i < 15; ++i) s.qm[0].data[static_cast<std::size_t>(i)] = 0;
  for (int i = 0; i < 14; ++i) s.qm[1].data[static_cast<std::size_t>(i)] = 0;
  const auto r = filter_clearance(s, 0.15);
  EXPECT_EQ(r.kept, (std::vector<std::int64_t>{1, 2}));
  EXPECT_FALSE(r.skipped);
  for (auto& m : s.qm) std::fill(m.data.begin(), m.data.end(), 0);
  EXPECT_TRUE(filter_clearance(s, 0.15).skipped);
}

TEST(Preprocess, SelectFramesPicksClearestAndRepeats) {
  SceneRecord s = ramp_scene(3, 10, 3);
  for (int i = 0; i < 5; ++i) s.qm[0].data[static_cast<std::size_t>(i)] = 0;
  for (int i = 0; i < 2; ++i) s.qm[2].data[static_cast<std::size_t>(i)] = 0;
  std::vector<std::int64_t> picked;
  select_frames(s, 2, &picked);
  EXPECT_EQ(picked, (std::vector<std::int64_t>{1, 2}));
  const auto out = select_frames(s, 7, &picked);
  EXPECT_EQ(picked, (std::vector<std::int64_t>{1, 2, 0, 1, 2, 0, 1}));
  EXPECT_EQ(out.frames(), 7);
  EXPECT_EQ(out.lr[3].data, s.lr[1].data);
}

TEST(Preprocess, RegistrationRecoversIntegerShifts) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  ImageF base(24, 24);
  for (auto& v : base.data) v = g(rng);
  SceneRecord s;
  s.id = "reg";
  const std::vector<Shift2> applied = {{0, 0}, {2, -1}, {-3, 1}, {1, 3}};
  for (const auto& sh : applied) {
    s.lr.push_back(shift_image(base, sh, 0.0));
    Mask m = shift_image(Mask(24, 24, 1), sh, std::uint8_t{0});
    s.qm.push_back(m);
  }
  // the unshifted frame must be the clearest so it becomes the reference
  const auto r = register_translational(s, 4);
  EXPECT_EQ(r.reference, 0);
  for (std::size_t i = 0; i < applied.size(); ++i) {
    EXPECT_EQ(r.shifts[i].dy, -applied[i].dy) << i;
    EXPECT_EQ(r.shifts[i].dx, -applied[i].dx) << i;
  }
}

TEST(Preprocess, ShiftCandidatesPreferSmallShifts) {
  const auto c = shift_candidates(2);
  EXPECT_EQ(c.size(), 25u);
  EXPECT_EQ(c[0], (Shift2{0, 0}));
  EXPECT_EQ(std::abs(c[1].dy) + std::abs(c[1].dx), 1);
}

TEST(Preprocess, StatsMatchTwoPassOverClearPixels) {
  const auto scenes = generate_synthetic(tiny_config(), 9);
  std::vector<double> clear;
  for (const auto& s : scenes)
    for (std::size_t f = 0; f < s.lr.size(); ++f)
      for (std::size_t i = 0; i < s.lr[f].data.size(); ++i)
        if (s.qm[f].data[i]) clear.push_back(s.lr[f].data[i]);
  double mean = 0, sd = 0;
  oracle::two_pass_stats(clear, mean, sd);
  const auto st = compute_stats(scenes);
  EXPECT_NEAR(st.mean, mean, 1e-9 * mean);
  EXPECT_NEAR(st.std, sd, 1e-9 * sd);
  const ImageF x = scenes[0].lr[0];
  const ImageF back = denormalize(normalize(x, st), st);
  for (std::size_t i = 0; i < x.data.size(); ++i) EXPECT_NEAR(back.data[i], x.data[i], 1e-9);
  EXPECT_EQ(NormalizationStats::from_kv(st.to_kv()).mean, st.mean);
}

TEST(Preprocess, PatchCountAndPlacement) {
  const SceneRecord s = ramp_scene(2, 32, 3);
  const auto p = extract_patches(s, 4, 16, 8);
  EXPECT_EQ(p.size(), 9u);
  EXPECT_EQ(extract_patches(s, 0, 8, 8).size(), 16u);
  EXPECT_EQ(p[1].x, 8);
  EXPECT_EQ(p[1].scene, 4);
  EXPECT_EQ(p[1].lr[1].at(0, 0), s.lr[1].at(0, 8));
  EXPECT_EQ(p[1].hr.height, 48);
  EXPECT_TRUE(extract_patches(s, 0, 40, 8).empty());
}

TEST(Preprocess, RotationMovesALandmarkCounterclockwise) {
  Patch p;
  ImageF img(4, 6, 0.0);
  img.at(0, 5) = 1.0;  // top-right corner
  p.lr = {img};
  p.qm = {Mask(4, 6, 1)};
  p.hr = img;
  p.sm = Mask(4, 6, 1);
  const Patch q = rotate_augment(p, 1);
  ASSERT_EQ(q.lr[0].height, 6);
  EXPECT_EQ(q.lr[0].at(0, 0), 1.0);
  const Patch full = rotate_augment(p, 4);
  EXPECT_EQ(full.lr[0].data, img.data);
}

TEST(Preprocess, PrepareSceneKeepsDegradedScenes) {
  SceneRecord s = ramp_scene(3, 10, 3);
  for (auto& m : s.qm) std::fill(m.data.begin(), m.data.begin() + 50, 0);
  PrepConfig c;
  c.frames = 5;
  const auto r = prepare_scene(s, c);
  EXPECT_TRUE(r.degraded);
  EXPECT_EQ(r.scene.frames(), 5);
}

TEST(Synthetic, DeterministicPerSeed) {
  const auto a = generate_synthetic(tiny_config(), 21), b = generate_synthetic(tiny_config(), 21);
  const auto c = generate_synthetic(tiny_config(), 22);
  EXPECT_EQ(a[1].lr[2].data, b[1].lr[2].data);
  EXPECT_EQ(a[1].hr.data, b[1].hr.data);
  EXPECT_NE(a[1].hr.data, c[1].hr.data);
  // a scene does not depend on how many others are generated
  SyntheticConfig more = tiny_config();
  more.scenes = 5;
  EXPECT_EQ(generate_synthetic(more, 21)[2].lr[0].data, a[2].lr[0].data);
}

TEST(Synthetic, CleanFramesAreAreaDownsampledTargets) {
  SyntheticConfig c = tiny_config();
  c.shift_range = 0;
  c.blur_sigma = 0;
  c.noise_sigma = 0;
  c.brightness_offset = 0;
  c.occlusion_rate = 0;
  const auto s = generate_scene(c, 4, 0);
  const ImageF want = area_downsample(s.hr, 3);
  for (std::size_t i = 0; i < want.data.size(); ++i) EXPECT_EQ(s.lr[0].data[i], round16(want.data[i]));
}

TEST(Synthetic, AreaDownsampleAveragesBlocks) {
  ImageF x(2, 4);
  x.data = {1, 2, 3, 4, 5, 6, 7, 8};
  const ImageF y = area_downsample(x, 2);
  EXPECT_EQ(y.data, (std::vector<double>{3.5, 5.5}));
}

TEST(Synthetic, OcclusionRateIsRespected) {
  SyntheticConfig c = tiny_config();
  c.occlusion_rate = 0.1;
  c.frames = 40;
  const auto s = generate_scene(c, 2, 0);
  double occluded = 0;
  for (const auto& m : s.qm) occluded += 1.0 - clear_fraction(m);
  EXPECT_NEAR(occluded / 40, 0.1, 0.03);
  c.occlusion_rate = 0.9;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Baseline, BicubicMatchesOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1000);
  ImageF img(5, 6);
  for (auto& v : img.data) v = u(rng);
  const ImageF up = bicubic_upsample(img, 3);
  const oracle::Plane p{5, 6, img.data};
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 18; ++x) EXPECT_NEAR(up.at(y, x), oracle::bicubic_at(p, 3, y, x), 1e-9);
}

TEST(Baseline, AverageSkipsOccludedFrames) {
  SceneRecord s;
  s.id = "avg";
  s.lr = {ImageF(2, 2, 10.0), ImageF(2, 2, 20.0)};
  s.qm = {Mask(2, 2, 1), Mask(2, 2, 1)};
  s.qm[1].at(0, 0) = 0;
  const ImageF out = bicubic_average(s, 2);
  EXPECT_NEAR(out.at(0, 0), 10.0, 1e-12);
  EXPECT_NEAR(out.at(3, 3), 15.0, 1e-12);
}
