#pragma once

// Named parameter collections and their binary archive.
//
// Archive layout (all integers little-endian):
//   "PIUNETAR"                  8 bytes magic
//   u32 version                 currently 1
//   u32 meta length, bytes      key = value text (model config, counters)
//   u32 tensor count
//   per tensor:
//     u32 name length, bytes
//     u32 rank, i64 dims[rank]
//     u8  dtype tag             1 = float32, 2 = float64
//     raw little-endian values

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "piunet/kvconfig.hpp"
#include "piunet/tensor.hpp"

namespace piunet {

class ArchiveError : public Error {
 public:
  using Error::Error;
};

class ParamMismatchError : public Error {
 public:
  ParamMismatchError(const std::string& what, std::vector<std::string> names)
      : Error(what), names_(std::move(names)) {}
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::kFloat32 : DType::kFloat64;
}

/// Values as stored; float64 holds either precision exactly.
struct ArchivedTensor {
  std::string name;
  Shape shape;
  DType dtype = DType::kFloat32;
  std::vector<double> values;
};

struct Archive {
  static constexpr std::uint32_t kVersion = 1;
  KeyValues meta;
  std::vector<ArchivedTensor> tensors;

  const ArchivedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    char buf[sizeof(U)];
    std::memcpy(buf, data_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, buf, sizeof(U));
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw ArchiveError("archive " + path_ + " is truncated at byte " + std::to_string(pos_));
    }
  }
  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_archive(const Archive& ar) {
  std::string out = "PIUNETAR";
  detail::put_le<std::uint32_t>(out, Archive::kVersion);
  const std::string meta = ar.meta.str();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ar.tensors.size()));
  for (const auto& t : ar.tensors) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_le<std::int64_t>(out, d);
    out.push_back(static_cast<char>(t.dtype));
    for (double v : t.values) {
      if (t.dtype == DType::kFloat32) detail::put_le<float>(out, static_cast<float>(v));
      else detail::put_le<double>(out, v);
    }
  }
  return out;
}

inline Archive parse_archive(const std::string& data, const std::string& path = "<memory>") {
  detail::Reader rd(data, path);
  if (rd.bytes(8) != "PIUNETAR") throw ArchiveError(path + ": not a parameter archive (bad magic)");
  const auto version = rd.get<std::uint32_t>();
  if (version != Archive::kVersion) {
    throw ArchiveError(path + ": unsupported archive version " + std::to_string(version));
  }
  Archive ar;
  ar.meta = KeyValues::parse(rd.bytes(rd.get<std::uint32_t>()));
  const auto count = rd.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchivedTensor t;
    t.name = rd.bytes(rd.get<std::uint32_t>());
    const auto rank = rd.get<std::uint32_t>();
    if (rank > 16) throw ArchiveError(path + ": implausible rank for tensor " + t.name);
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.shape.push_back(rd.get<std::int64_t>());
      if (t.shape.back() < 0) throw ArchiveError(path + ": negative extent for tensor " + t.name);
    }
    const auto tag = rd.get<std::uint8_t>();
    if (tag != 1 && tag != 2) throw ArchiveError(path + ": unknown dtype tag for tensor " + t.name);
    t.dtype = static_cast<DType>(tag);
    const auto n = shape_numel(t.shape);
    t.values.resize(static_cast<std::size_t>(n));
    for (auto& v : t.values) v = t.dtype == DType::kFloat32 ? rd.get<float>() : rd.get<double>();
    ar.tensors.push_back(std::move(t));
  }
  if (!rd.at_end()) throw ArchiveError(path + ": trailing bytes after last tensor");
  return ar;
}

inline void write_archive(const std::string& path, const Archive& ar) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArchiveError("cannot open " + path + " for writing");
  const std::string data = serialize_archive(ar);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw ArchiveError("failed writing " + path);
}

inline Archive read_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArchiveError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_archive(data, path);
}

/// Ordered, named set of trainable leaf tensors.
template <typename T>
class ParamSet {
 public:
  Tensor<T>& add(const std::string& name, Shape shape) {
    if (index_.count(name)) throw Error("duplicate parameter " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, Tensor<T>::zeros(std::move(shape), true)});
    return entries_.back().second;
  }

  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter " + name);
    return entries_[it->second].second;
  }
  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter " + name);
    return entries_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
  }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  /// Fresh leaves holding copies of the values.
  ParamSet clone() const {
    ParamSet out;
    for (const auto& [name, t] : entries_) {
      out.add(name, t.shape());
      auto dst = out.get(name).mutable_values();
      std::copy(t.values().begin(), t.values().end(), dst.begin());
    }
    return out;
  }

  Archive to_archive(const KeyValues& meta) const {
    Archive ar;
    ar.meta = meta;
    for (const auto& [name, t] : entries_) {
      ArchivedTensor at{name, t.shape(), dtype_of<T>(), {}};
      at.values.assign(t.values().begin(), t.values().end());
      ar.tensors.push_back(std::move(at));
    }
    return ar;
  }

  /// Copies values from an archive; names and shapes must match exactly.
  void assign(const Archive& ar) {
    std::vector<std::string> bad;
    std::map<std::string, const ArchivedTensor*> by_name;
    for (const auto& t : ar.tensors) by_name[t.name] = &t;
    for (const auto& [name, t] : entries_) {
      auto it = by_name.find(name);
      if (it == by_name.end() || it->second->shape != t.shape()) bad.push_back(name);
    }
    for (const auto& [name, t] : by_name) {
      if (!index_.count(name)) bad.push_back(name);
    }
    if (!bad.empty()) {
      std::string msg = "parameter archive does not match the model configuration; offending tensors:";
      for (const auto& n : bad) msg += " " + n;
      throw ParamMismatchError(msg, bad);
    }
    for (auto& [name, t] : entries_) {
      const auto* src = by_name[name];
      auto dst = t.mutable_values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src->values[i]);
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace piunet
