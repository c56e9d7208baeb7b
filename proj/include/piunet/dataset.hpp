#pragma once

// On-disk scene collections.
//
//   root/<band>/<scene id>/LR000.png ...   16-bit low-resolution frames
//   root/<band>/<scene id>/QM000.png ...   clearance mask per frame (nonzero = clear)
//   root/<band>/<scene id>/HR.png          optional 16-bit target
//   root/<band>/<scene id>/SM.png          status mask of HR, required with HR
//   root/manifest.csv                      band,scene,split
//
// Masks are written as 8-bit 0/255 images.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <regex>

#include "piunet/kvconfig.hpp"
#include "piunet/png_io.hpp"

namespace piunet {

class DatasetError : public Error {
 public:
  using Error::Error;
};
class MissingMaskError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class SizeMismatchError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class UnreadableFileError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

struct SceneRecord {
  std::string id;
  std::string band = "synthetic";
  std::vector<ImageF> lr;  // 16-bit intensity scale
  std::vector<Mask> qm;    // 1 = clear
  bool has_hr = false;
  ImageF hr;
  Mask sm;

  std::int64_t frames() const { return static_cast<std::int64_t>(lr.size()); }
  std::int64_t lr_height() const { return lr.empty() ? 0 : lr[0].height; }
  std::int64_t lr_width() const { return lr.empty() ? 0 : lr[0].width; }

  /// Throws SizeMismatchError / MissingMaskError on violated invariants.
  void validate() const {
    if (qm.size() != lr.size()) {
      throw MissingMaskError("scene " + id + ": " + std::to_string(lr.size()) + " frames but " +
                             std::to_string(qm.size()) + " masks");
    }
    for (std::size_t i = 0; i < lr.size(); ++i) {
      if (!lr[i].same_size(lr[0])) {
        throw SizeMismatchError("scene " + id + ": LR frame " + std::to_string(i) + " is " +
                                std::to_string(lr[i].height) + "x" + std::to_string(lr[i].width) + ", frame 0 is " +
                                std::to_string(lr[0].height) + "x" + std::to_string(lr[0].width));
      }
      if (!qm[i].same_size(lr[i])) {
        throw SizeMismatchError("scene " + id + ": mask " + std::to_string(i) + " does not match its frame");
      }
    }
    if (has_hr) {
      if (!sm.same_size(hr)) throw SizeMismatchError("scene " + id + ": HR status mask does not match HR");
      if (!lr.empty() && (hr.height % lr[0].height != 0 || hr.width % lr[0].width != 0 ||
                          hr.height / lr[0].height != hr.width / lr[0].width)) {
        throw SizeMismatchError("scene " + id + ": HR size is not an integer multiple of the LR size");
      }
    }
  }

  std::int64_t scale() const {
    if (!has_hr || lr.empty()) return 0;
    return hr.height / lr[0].height;
  }
};

namespace detail {

inline std::string frame_name(const char* prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%s%03zu.png", prefix, i);
  return buf;
}

inline ImageF read_intensity(const std::filesystem::path& p) {
  try {
    return convert<double>(read_png_gray(p.string()));
  } catch (const ImageIoError& e) {
    throw UnreadableFileError(e.what());
  }
}

inline Mask read_mask(const std::filesystem::path& p) {
  try {
    const auto raw = read_png_gray(p.string());
    Mask m(raw.height, raw.width);
    for (std::size_t i = 0; i < raw.data.size(); ++i) m.data[i] = raw.data[i] > 0 ? 1 : 0;
    return m;
  } catch (const ImageIoError& e) {
    throw UnreadableFileError(e.what());
  }
}

inline void write_mask(const std::filesystem::path& p, const Mask& m) {
  Image<std::uint16_t> out(m.height, m.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i] ? 255 : 0;
  write_png_gray(p.string(), out, 8);
}

}  // namespace detail

inline SceneRecord load_scene(const std::filesystem::path& dir, const std::string& band) {
  namespace fs = std::filesystem;
  SceneRecord s;
  s.id = dir.filename().string();
  s.band = band;
  static const std::regex lr_re("LR([0-9]{3})\\.png");
  std::vector<std::pair<int, fs::path>> frames;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, lr_re)) frames.emplace_back(std::stoi(m[1].str()), e.path());
  }
  std::sort(frames.begin(), frames.end());
  for (const auto& [idx, path] : frames) {
    const fs::path qm = dir / detail::frame_name("QM", static_cast<std::size_t>(idx));
    if (!fs::exists(qm)) {
      throw MissingMaskError("scene " + s.id + ": frame " + path.filename().string() + " has no mask " +
                             qm.filename().string());
    }
    s.lr.push_back(detail::read_intensity(path));
    s.qm.push_back(detail::read_mask(qm));
  }
  if (fs::exists(dir / "HR.png")) {
    if (!fs::exists(dir / "SM.png")) throw MissingMaskError("scene " + s.id + ": HR.png has no SM.png");
    s.has_hr = true;
    s.hr = detail::read_intensity(dir / "HR.png");
    s.sm = detail::read_mask(dir / "SM.png");
  }
  s.validate();
  return s;
}

/// Scenes of one band sorted by id. A missing band directory yields an empty list.
inline std::vector<SceneRecord> load_dataset(const std::string& root, const std::string& band) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(root) / band;
  std::vector<SceneRecord> out;
  if (!fs::exists(dir)) return out;
  std::vector<fs::path> scenes;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) scenes.push_back(e.path());
  }
  std::sort(scenes.begin(), scenes.end());
  for (const auto& p : scenes) out.push_back(load_scene(p, band));
  return out;
}

inline void save_scene(const std::filesystem::path& dir, const SceneRecord& s) {
  s.validate();
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < s.lr.size(); ++i) {
    write_png_gray((dir / detail::frame_name("LR", i)).string(), quantize16(s.lr[i]), 16);
    detail::write_mask(dir / detail::frame_name("QM", i), s.qm[i]);
  }
  if (s.has_hr) {
    write_png_gray((dir / "HR.png").string(), quantize16(s.hr), 16);
    detail::write_mask(dir / "SM.png", s.sm);
  }
}

inline void save_dataset(const std::string& root, const std::vector<SceneRecord>& scenes) {
  for (const auto& s : scenes) save_scene(std::filesystem::path(root) / s.band / s.id, s);
}

struct ManifestEntry {
  std::string band, scene, split;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<std::string> scenes(const std::string& band, const std::string& split) const {
    std::vector<std::string> out;
    for (const auto& e : entries)
      if (e.band == band && e.split == split) out.push_back(e.scene);
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DatasetError("cannot write manifest " + path);
    f << "band,scene,split\n";
    for (const auto& e : entries) f << e.band << ',' << e.scene << ',' << e.split << '\n';
  }

  static DatasetManifest load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UnreadableFileError("cannot read manifest " + path);
    DatasetManifest m;
    std::string line;
    std::getline(f, line);
    if (line != "band,scene,split") throw DatasetError("manifest " + path + ": unexpected header");
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto a = line.find(','), b = line.rfind(',');
      if (a == std::string::npos || a == b) throw DatasetError("manifest " + path + ": bad row '" + line + "'");
      m.entries.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)});
    }
    return m;
  }
};

/// Scenes of `band` assigned to `split` by root/manifest.csv, in manifest order.
inline std::vector<SceneRecord> load_split(const std::string& root, const std::string& band,
                                           const std::string& split) {
  namespace fs = std::filesystem;
  const auto manifest = DatasetManifest::load((fs::path(root) / "manifest.csv").string());
  std::vector<SceneRecord> out;
  for (const auto& id : manifest.scenes(band, split)) out.push_back(load_scene(fs::path(root) / band / id, band));
  return out;
}

}  // namespace piunet
