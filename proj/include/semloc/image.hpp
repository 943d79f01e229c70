#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "semloc/errors.hpp"

namespace semloc {

/// Dense row-major multi-channel image, channel index fastest.
template <typename T>
class Image
{
public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, int channels = 1, T fill = T{})
    : width_(width), height_(height), channels_(channels)
  {
    if (width < 0 || height < 0 || channels < 1) throw DimensionError("invalid image shape");
    data_.assign(static_cast<size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  size_t index(int x, int y, int c = 0) const
  {
    return (static_cast<size_t>(y) * width_ + x) * channels_ + c;
  }

  T& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<T> pixel(int x, int y) { return {data_.data() + index(x, y), static_cast<size_t>(channels_)}; }
  std::span<const T> pixel(int x, int y) const
  {
    return {data_.data() + index(x, y), static_cast<size_t>(channels_)};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Image&) const = default;

private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

}  // namespace semloc
