#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "mscare/common.hpp"

namespace mscare {

/// Dense channels-first 4D array (C, D, H, W), W fastest. Batch size is
/// always one; subjects are processed one at a time.
template <typename T>
struct Tensor {
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::array<int, 4> s, T fill = T(0))
      : shape(s), data(static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3], fill) {}
  Tensor(int channels, const Shape3& spatial, T fill = T(0))
      : Tensor(std::array<int, 4>{channels, spatial[0], spatial[1], spatial[2]}, fill) {}

  int channels() const { return shape[0]; }
  Shape3 spatial() const { return {shape[1], shape[2], shape[3]}; }
  std::size_t channel_size() const { return static_cast<std::size_t>(shape[1]) * shape[2] * shape[3]; }
  std::size_t size() const { return data.size(); }

  T* channel(int c) { return data.data() + c * channel_size(); }
  const T* channel(int c) const { return data.data() + c * channel_size(); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool operator==(const Tensor&) const = default;
};

}  // namespace mscare
