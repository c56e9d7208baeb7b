#pragma once

// Plain single-band raster used outside the autodiff graph.

#include <cstdint>
#include <string>
#include <vector>

#include "piunet/tensor.hpp"

namespace piunet {

template <typename P>
struct Image {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<P> data;

  Image() = default;
  Image(std::int64_t h, std::int64_t w, P fill = P{})
      : height(h), width(w), data(static_cast<std::size_t>(h * w), fill) {}

  P& at(std::int64_t y, std::int64_t x) { return data[static_cast<std::size_t>(y * width + x)]; }
  const P& at(std::int64_t y, std::int64_t x) const { return data[static_cast<std::size_t>(y * width + x)]; }
  std::int64_t size() const { return height * width; }
  bool same_size(std::int64_t h, std::int64_t w) const { return height == h && width == w; }
  template <typename Q>
  bool same_size(const Image<Q>& o) const {
    return height == o.height && width == o.width;
  }
  bool operator==(const Image&) const = default;
};

using ImageF = Image<double>;
using Mask = Image<std::uint8_t>;

template <typename Q, typename P>
Image<Q> convert(const Image<P>& in) {
  Image<Q> out(in.height, in.width);
  for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = static_cast<Q>(in.data[i]);
  return out;
}

template <typename P>
Image<P> crop(const Image<P>& in, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w) {
  if (y0 < 0 || x0 < 0 || y0 + h > in.height || x0 + w > in.width) {
    throw ShapeError("crop: window exceeds " + std::to_string(in.height) + "x" + std::to_string(in.width));
  }
  Image<P> out(h, w);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) out.at(y, x) = in.at(y0 + y, x0 + x);
  return out;
}

/// Counterclockwise rotation by k * 90 degrees.
template <typename P>
Image<P> rot90(const Image<P>& in, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return in;
  const bool swap = k % 2 == 1;
  Image<P> out(swap ? in.width : in.height, swap ? in.height : in.width);
  for (std::int64_t y = 0; y < in.height; ++y)
    for (std::int64_t x = 0; x < in.width; ++x) {
      const P v = in.at(y, x);
      if (k == 1) out.at(in.width - 1 - x, y) = v;
      else if (k == 2) out.at(in.height - 1 - y, in.width - 1 - x) = v;
      else out.at(x, in.height - 1 - y) = v;
    }
  return out;
}

template <typename P>
double clear_fraction(const Image<P>& mask) {
  if (mask.data.empty()) return 0.0;
  std::int64_t n = 0;
  for (auto m : mask.data) n += m != P{} ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(mask.data.size());
}

}  // namespace piunet
