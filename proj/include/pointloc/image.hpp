#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace pointloc {

/// Row-major interleaved raster.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c = 1, T fill = T{})
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }

  std::size_t index(int x, int y, int c = 0) const {
    assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 && c < channels);
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }
  bool operator==(const Image&) const = default;
};

using RgbImage = Image<std::uint8_t>;     // 3 channels
using GrayImage = Image<std::uint8_t>;    // 1 channel
using DepthImage = Image<float>;          // normalized [0, 1], 1 == 10 m
using InstanceImage = Image<std::uint16_t>;

}  // namespace pointloc
