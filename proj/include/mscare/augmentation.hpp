#pragma once

#include <random>
#include <vector>

#include "mscare/labels.hpp"
#include "mscare/volume.hpp"

namespace mscare {

/// Sampling ranges. Symmetric ranges are given by their half-width.
struct AugmentationRanges {
  bool enabled = true;
  double translation = 20.0;  // voxels
  double rotation = 0.35;     // radians
  double iso_scale_min = 0.8, iso_scale_max = 1.2;
  double aniso_scale_min = 0.9, aniso_scale_max = 1.1;
  int elastic_nodes = 8;     // per dimension
  double elastic = 15.0;     // voxels, per displacement component
  double intensity_shift = 0.2;
  double intensity_scale_min = 0.6, intensity_scale_max = 1.4;

  void validate() const;
  bool operator==(const AugmentationRanges&) const = default;
};

struct SpatialParams {
  Vec3 translation{0, 0, 0};
  Vec3 rotation{0, 0, 0};
  double iso_scale = 1.0;
  Vec3 aniso_scale{1, 1, 1};
  int elastic_nodes = 8;
  std::vector<Vec3> elastic;  // nodes^3 displacements, last axis fastest

  static SpatialParams identity(int nodes = 8);
};

/// One (shift, scale) pair per sequence; entries of missing sequences are unused.
struct IntensityParams {
  std::array<double, kSequenceCount> shift{0, 0, 0};
  std::array<double, kSequenceCount> scale{1, 1, 1};
  SequenceMask sampled{false, false, false};
};

/// Uniform independent draws in the order translation, rotation, iso scale,
/// aniso scale, elastic nodes.
SpatialParams sample_spatial_params(const AugmentationRanges& r, std::mt19937_64& rng);
IntensityParams sample_intensity_params(const AugmentationRanges& r, const SequenceMask& present, std::mt19937_64& rng);

/// Source coordinates for every output voxel of a grid. Built once per
/// subject and shared by all of its sequences and its labelmap so they stay
/// voxel-aligned.
///
/// Output voxel p samples the input at
///   q = c + R^T ((p + d(p) - t - c) / s)
/// with c the grid centre, t the translation, R the rotation, s the per-axis
/// scale (iso * aniso) and d the elastic field interpolated trilinearly from
/// the node grid.
struct SpatialTransform {
  Shape3 shape{0, 0, 0};
  std::vector<float> source;  // 3 floats per voxel

  static SpatialTransform build(const Shape3& shape, const SpatialParams& p);
};

/// Resamples `v` through `t`: trilinear for intensity, nearest for labelmaps.
/// Source positions outside the input take `pad_value`.
Volume apply_spatial(const Volume& v, const SpatialTransform& t, float pad_value);
Volume apply_spatial(const Volume& v, const SpatialParams& p, float pad_value);

/// out = v * scale + shift for the given sequence.
Volume apply_intensity(const Volume& v, const IntensityParams& p, Sequence seq);

/// Uniform double in [lo, hi) from the top 53 bits of one draw.
double uniform(std::mt19937_64& rng, double lo, double hi);

}  // namespace mscare
