#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "poseguide/errors.hpp"

namespace poseguide {

// Planar image container: channels × height × width, row-major inside a
// channel. Value-semantic; all pipeline types build on it.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, T fill = T{})
      : channels_(channels), height_(height), width_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {
    if (channels <= 0 || height <= 0 || width <= 0)
      throw ShapeError("image dimensions must be positive");
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  T& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  const T& at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  std::span<T> channel(int c) {
    return {data_.data() + static_cast<std::size_t>(c) * height_ * width_,
            static_cast<std::size_t>(height_) * width_};
  }
  std::span<const T> channel(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * height_ * width_,
            static_cast<std::size_t>(height_) * width_};
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0, height_ = 0, width_ = 0;
  std::vector<T> data_;
};

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<float>;
using ImageD = Image<double>;

// Stack of dense 2-channel displacement fields: frames × 2 × H × W.
// Storage is float32, matching the on-disk .flo precision; solvers and
// encoders widen to double internally.
class MotionFieldStack {
 public:
  MotionFieldStack() = default;
  MotionFieldStack(int frames, int height, int width)
      : frames_(frames), height_(height), width_(width),
        data_(static_cast<std::size_t>(frames) * 2 * height * width, 0.0f) {
    if (frames <= 0 || height <= 0 || width <= 0)
      throw ShapeError("motion field dimensions must be positive");
  }

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  // c: 0 = u (x displacement), 1 = v (y displacement).
  float& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }

  friend bool operator==(const MotionFieldStack&, const MotionFieldStack&) = default;

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * 2 + c) * height_ + y) * width_ + x;
  }

  int frames_ = 0, height_ = 0, width_ = 0;
  std::vector<float> data_;
};

}  // namespace poseguide
