#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pds {

/// Row-major H x W grid of values.
template <typename V>
struct Map2D {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<V> values;

  Map2D() = default;
  Map2D(std::size_t h, std::size_t w, V fill = V{})
      : height(h), width(w), values(h * w, fill) {}
  Map2D(std::size_t h, std::size_t w, std::vector<V> v)
      : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) {
      throw std::invalid_argument("map of " + std::to_string(h) + "x" + std::to_string(w) +
                                  " given " + std::to_string(values.size()) + " values");
    }
  }

  std::size_t size() const { return values.size(); }
  V& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  const V& at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  bool same_extent(std::size_t h, std::size_t w) const { return height == h && width == w; }
  template <typename U>
  bool same_extent(const Map2D<U>& other) const {
    return height == other.height && width == other.width;
  }

  bool operator==(const Map2D&) const = default;
};

/// Disparities in full-resolution pixels.
using DisparityMap = Map2D<float>;
/// Nonzero = valid ground truth.
using ValidityMask = Map2D<std::uint8_t>;

inline std::size_t count_valid(const ValidityMask& mask) {
  std::size_t n = 0;
  for (auto v : mask.values) n += v != 0;
  return n;
}

}  // namespace pds
