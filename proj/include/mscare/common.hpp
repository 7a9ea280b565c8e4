#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mscare {

/// Library-wide exception. Every failure surfaced by mscare is one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Voxel grid extent in array order (depth, height, width).
using Shape3 = std::array<int, 3>;

/// Real-valued 3-vector in array axis order (axis 0 = depth / z).
using Vec3 = std::array<double, 3>;

/// Flushes subnormal floats to zero (FTZ and DAZ) on the calling thread while
/// alive. Late in training, activations and gradients drift into the subnormal
/// range, where x86 arithmetic is an order of magnitude slower.
class FlushSubnormals {
 public:
  FlushSubnormals();
  ~FlushSubnormals();
  FlushSubnormals(const FlushSubnormals&) = delete;
  FlushSubnormals& operator=(const FlushSubnormals&) = delete;

 private:
  unsigned saved_ = 0;
};

inline std::size_t voxel_count(const Shape3& s) {
  return static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]) *
         static_cast<std::size_t>(s[2]);
}

}  // namespace mscare
