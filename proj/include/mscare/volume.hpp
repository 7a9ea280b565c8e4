#pragma once

#include <span>
#include <vector>

#include "mscare/common.hpp"

namespace mscare {

enum class VolumeKind { Intensity, Labelmap };

using Direction = std::array<double, 9>;  // row-major, column a = world axis of array axis a

constexpr Direction kIdentityDirection = {1, 0, 0, 0, 1, 0, 0, 0, 1};

/// Dense 3D scalar grid with physical geometry. Data is stored with the last
/// axis (width) fastest.
struct Volume {
  Shape3 shape{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};  // mm per voxel, per array axis
  Vec3 origin{0.0, 0.0, 0.0};   // world position (mm) of voxel (0,0,0)
  Direction direction = kIdentityDirection;
  VolumeKind kind = VolumeKind::Intensity;
  std::vector<float> data;

  Volume() = default;
  Volume(Shape3 s, Vec3 sp, VolumeKind k, float fill = 0.0f);

  std::size_t size() const { return data.size(); }
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * shape[1] + y) * shape[2] + x;
  }
  float& at(int z, int y, int x) { return data[index(z, y, x)]; }
  float at(int z, int y, int x) const { return data[index(z, y, x)]; }
  bool contains(int z, int y, int x) const {
    return z >= 0 && y >= 0 && x >= 0 && z < shape[0] && y < shape[1] && x < shape[2];
  }

  /// Copy of this volume's geometry (shape, spacing, origin, direction) with new contents.
  Volume like(VolumeKind k, float fill = 0.0f) const;

  /// Throws unless spacing is positive and data matches the shape; labelmaps
  /// must also hold non-negative integers.
  void validate() const;

  bool same_grid(const Volume& other) const { return shape == other.shape; }
};

struct RoiSpec {
  Vec3 center{0, 0, 0};  // voxel coordinates
  Shape3 size{1, 1, 1};
  float pad_value = 0.0f;
};

/// Resample to isotropic `target_spacing` mm. Output size per axis is
/// round(n * spacing / target); voxel-centre aligned so the physical extent
/// is preserved. Intensity volumes use trilinear interpolation, labelmaps
/// nearest neighbour. Equal spacing returns an exact copy.
Volume resample_isotropic(const Volume& v, double target_spacing);

/// Midpoint of the axis-aligned bounding box of all non-zero voxels.
Vec3 compute_label_center(const Volume& gt);

/// Centre of the whole grid, ((n-1)/2 per axis).
Vec3 scan_center(const Volume& v);

/// First voxel index of an ROI of `size` voxels centred at `center`.
Shape3 roi_start(const Vec3& center, const Shape3& size);

/// Crop (and pad where needed) a window of exactly roi.size voxels.
Volume extract_roi(const Volume& v, const RoiSpec& roi);

/// Linear-interpolation percentile (0..100) of a multiset of values.
double percentile(std::span<const float> values, double pct);

/// Affine map sending the 10th percentile to -1 and the 90th to +1, no clamping.
Volume robust_normalize(const Volume& v);

/// All-zero intensity volume with the template's geometry.
Volume missing_sequence_placeholder(const Volume& templ);

float min_value(const Volume& v);

}  // namespace mscare

namespace mscare {

/// World position (mm) of continuous voxel coordinates.
Vec3 voxel_to_world(const Volume& v, const Vec3& idx);
/// Continuous voxel coordinates of a world position; throws on a singular direction matrix.
Vec3 world_to_voxel(const Volume& v, const Vec3& world);

}  // namespace mscare
