#pragma once

// Plumbing for the command-line tool: config files with flag overrides,
// SHA-256 digests of inputs and outputs, and the per-run manifest.

#include <openssl/evp.h>
#include <openssl/opensslv.h>
#include <png.h>

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "piunet/kvconfig.hpp"

namespace piunet::cli {

inline constexpr const char* kVersion = "0.3.0";

inline std::string to_hex(const unsigned char* d, unsigned n) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned i = 0; i < n; ++i) os << std::setw(2) << static_cast<int>(d[i]);
  return os.str();
}

inline std::string sha256(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned n = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &n, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  return to_hex(md, n);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read " + p.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline std::string sha256_file(const std::filesystem::path& p) { return sha256(read_file(p)); }

/// Digest of every regular file under `root` (or of `root` itself), keyed by
/// the path relative to `root`, in sorted order. `skip` names are ignored.
inline nlohmann::ordered_json digest_tree(const std::filesystem::path& root,
                                          const std::vector<std::string>& skip = {"manifest.json"}) {
  namespace fs = std::filesystem;
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  if (fs::is_regular_file(root)) {
    out[root.filename().string()] = sha256_file(root);
    return out;
  }
  if (!fs::is_directory(root)) throw Error("no such file or directory: " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    if (std::find(skip.begin(), skip.end(), e.path().filename().string()) != skip.end()) continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) out[fs::relative(p, root).generic_string()] = sha256_file(p);
  return out;
}

inline nlohmann::ordered_json versions() {
  nlohmann::ordered_json v;
  v["piunet"] = kVersion;
#if defined(__clang__)
  v["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  v["compiler"] = "gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__) + "." +
                  std::to_string(__GNUC_PATCHLEVEL__);
#endif
  v["cxx_standard"] = static_cast<long>(__cplusplus);
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["libpng"] = PNG_LIBPNG_VER_STRING;
  v["openssl"] = OPENSSL_VERSION_TEXT;
  return v;
}

/// Config file (optional) overlaid with explicit flag values.
inline KeyValues merged_config(const std::string& path, const KeyValues& overrides) {
  KeyValues kv = path.empty() ? KeyValues() : KeyValues::load(path);
  kv.merge(overrides);
  return kv;
}

class Manifest {
 public:
  Manifest(std::string command, std::uint64_t seed) {
    j_["command"] = std::move(command);
    j_["seed"] = seed;
    j_["versions"] = versions();
    j_["config"] = nlohmann::ordered_json::object();
    j_["inputs"] = nlohmann::ordered_json::object();
    j_["outputs"] = nlohmann::ordered_json::object();
  }

  void config(const KeyValues& kv) {
    for (const auto& [k, v] : kv.items()) j_["config"][k] = v;
  }
  void input(const std::string& label, const std::filesystem::path& p) { j_["inputs"][label] = digest_tree(p); }
  void output(const std::string& label, const std::filesystem::path& p) { j_["outputs"][label] = digest_tree(p); }
  nlohmann::ordered_json& extra() { return j_; }
  const nlohmann::ordered_json& json() const { return j_; }

  void save(const std::filesystem::path& p) const {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write manifest " + p.string());
    f << j_.dump(2) << '\n';
  }

 private:
  nlohmann::ordered_json j_;
};

/// One-line JSON error record for stderr.
inline std::string error_record(const std::string& command, const std::string& type, const std::string& message) {
  nlohmann::ordered_json e;
  e["error"]["command"] = command;
  e["error"]["type"] = type;
  e["error"]["message"] = message;
  return e.dump();
}

}  // namespace piunet::cli
