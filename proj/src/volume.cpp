#include "mscare/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mscare {

Volume::Volume(Shape3 s, Vec3 sp, VolumeKind k, float fill)
    : shape(s), spacing(sp), kind(k), data(voxel_count(s), fill) {}

Volume Volume::like(VolumeKind k, float fill) const {
  Volume out(shape, spacing, k, fill);
  out.origin = origin;
  out.direction = direction;
  return out;
}

void Volume::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] <= 0) throw Error("volume has non-positive extent on axis " + std::to_string(a));
    if (!(spacing[a] > 0.0)) throw Error("volume spacing must be positive on axis " + std::to_string(a));
  }
  if (data.size() != voxel_count(shape)) throw Error("volume data does not match its shape");
  if (kind == VolumeKind::Labelmap) {
    for (float v : data) {
      if (v < 0.0f || v != std::floor(v)) throw Error("labelmap holds a non-integer or negative value");
    }
  }
}

namespace {

// Moves the origin by `shift` voxels (continuous) along each array axis.
Vec3 shifted_origin(const Volume& v, const Vec3& shift) {
  Vec3 o = v.origin;
  for (int r = 0; r < 3; ++r) {
    for (int a = 0; a < 3; ++a) o[r] += v.direction[r * 3 + a] * v.spacing[a] * shift[a];
  }
  return o;
}

struct AxisTaps {
  std::vector<int> lo, hi;
  std::vector<float> w;  // weight of hi
};

AxisTaps linear_taps(int n_in, int n_out, double in_spacing, double out_spacing) {
  AxisTaps t;
  t.lo.resize(n_out);
  t.hi.resize(n_out);
  t.w.resize(n_out);
  for (int j = 0; j < n_out; ++j) {
    double x = ((j + 0.5) * out_spacing) / in_spacing - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(n_in - 1));
    int i0 = static_cast<int>(std::floor(x));
    int i1 = std::min(i0 + 1, n_in - 1);
    t.lo[j] = i0;
    t.hi[j] = i1;
    t.w[j] = static_cast<float>(x - i0);
  }
  return t;
}

std::vector<int> nearest_taps(int n_in, int n_out, double in_spacing, double out_spacing) {
  std::vector<int> idx(n_out);
  for (int j = 0; j < n_out; ++j) {
    double x = ((j + 0.5) * out_spacing) / in_spacing - 0.5;
    int i = static_cast<int>(std::floor(x + 0.5));
    idx[j] = std::clamp(i, 0, n_in - 1);
  }
  return idx;
}

}  // namespace

Volume resample_isotropic(const Volume& v, double target_spacing) {
  if (!(target_spacing > 0.0)) throw Error("target spacing must be positive");
  if (v.spacing[0] == target_spacing && v.spacing[1] == target_spacing &&
      v.spacing[2] == target_spacing) {
    return v;
  }
  Shape3 out_shape;
  for (int a = 0; a < 3; ++a) {
    out_shape[a] = std::max(1, static_cast<int>(std::lround(v.shape[a] * v.spacing[a] / target_spacing)));
  }
  Volume out(out_shape, {target_spacing, target_spacing, target_spacing}, v.kind);
  out.direction = v.direction;
  Vec3 first;
  for (int a = 0; a < 3; ++a) first[a] = (0.5 * target_spacing) / v.spacing[a] - 0.5;
  out.origin = shifted_origin(v, first);

  if (v.kind == VolumeKind::Labelmap) {
    auto iz = nearest_taps(v.shape[0], out_shape[0], v.spacing[0], target_spacing);
    auto iy = nearest_taps(v.shape[1], out_shape[1], v.spacing[1], target_spacing);
    auto ix = nearest_taps(v.shape[2], out_shape[2], v.spacing[2], target_spacing);
    for (int z = 0; z < out_shape[0]; ++z)
      for (int y = 0; y < out_shape[1]; ++y)
        for (int x = 0; x < out_shape[2]; ++x) out.at(z, y, x) = v.at(iz[z], iy[y], ix[x]);
    return out;
  }

  auto tz = linear_taps(v.shape[0], out_shape[0], v.spacing[0], target_spacing);
  auto ty = linear_taps(v.shape[1], out_shape[1], v.spacing[1], target_spacing);
  auto tx = linear_taps(v.shape[2], out_shape[2], v.spacing[2], target_spacing);
  for (int z = 0; z < out_shape[0]; ++z) {
    const float wz = tz.w[z];
    for (int y = 0; y < out_shape[1]; ++y) {
      const float wy = ty.w[y];
      for (int x = 0; x < out_shape[2]; ++x) {
        const float wx = tx.w[x];
        auto lerp_x = [&](int zz, int yy) {
          return v.at(zz, yy, tx.lo[x]) * (1.0f - wx) + v.at(zz, yy, tx.hi[x]) * wx;
        };
        float c0 = lerp_x(tz.lo[z], ty.lo[y]) * (1.0f - wy) + lerp_x(tz.lo[z], ty.hi[y]) * wy;
        float c1 = lerp_x(tz.hi[z], ty.lo[y]) * (1.0f - wy) + lerp_x(tz.hi[z], ty.hi[y]) * wy;
        out.at(z, y, x) = c0 * (1.0f - wz) + c1 * wz;
      }
    }
  }
  return out;
}

Vec3 compute_label_center(const Volume& gt) {
  Shape3 lo = gt.shape, hi{-1, -1, -1};
  for (int z = 0; z < gt.shape[0]; ++z)
    for (int y = 0; y < gt.shape[1]; ++y)
      for (int x = 0; x < gt.shape[2]; ++x) {
        if (gt.at(z, y, x) == 0.0f) continue;
        const int p[3] = {z, y, x};
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], p[a]);
          hi[a] = std::max(hi[a], p[a]);
        }
      }
  if (hi[0] < 0) throw Error("labelmap has no foreground voxels; cannot compute a centre");
  return {0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])};
}

Vec3 scan_center(const Volume& v) {
  return {0.5 * (v.shape[0] - 1), 0.5 * (v.shape[1] - 1), 0.5 * (v.shape[2] - 1)};
}

Shape3 roi_start(const Vec3& center, const Shape3& size) {
  Shape3 s;
  for (int a = 0; a < 3; ++a) {
    s[a] = static_cast<int>(std::floor(center[a] - 0.5 * (size[a] - 1) + 0.5));
  }
  return s;
}

Volume extract_roi(const Volume& v, const RoiSpec& roi) {
  for (int a = 0; a < 3; ++a) {
    if (roi.size[a] <= 0) throw Error("ROI size must be positive");
  }
  const Shape3 start = roi_start(roi.center, roi.size);
  Volume out(roi.size, v.spacing, v.kind, roi.pad_value);
  out.direction = v.direction;
  out.origin = shifted_origin(v, {double(start[0]), double(start[1]), double(start[2])});

  // Clip the copy window to the source once, then copy rows.
  const int x_lo = std::max(0, -start[2]);
  const int x_hi = std::min(roi.size[2], v.shape[2] - start[2]);
  if (x_hi <= x_lo) return out;
  for (int z = 0; z < roi.size[0]; ++z) {
    const int sz = start[0] + z;
    if (sz < 0 || sz >= v.shape[0]) continue;
    for (int y = 0; y < roi.size[1]; ++y) {
      const int sy = start[1] + y;
      if (sy < 0 || sy >= v.shape[1]) continue;
      const float* src = &v.data[v.index(sz, sy, start[2] + x_lo)];
      std::copy(src, src + (x_hi - x_lo), &out.data[out.index(z, y, x_lo)]);
    }
  }
  return out;
}

double percentile(std::span<const float> values, double pct) {
  if (values.empty()) throw Error("percentile of an empty set");
  if (pct < 0.0 || pct > 100.0) throw Error("percentile must lie in [0, 100]");
  std::vector<float> work(values.begin(), values.end());
  const double rank = pct / 100.0 * static_cast<double>(work.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const double frac = rank - static_cast<double>(lo);
  std::nth_element(work.begin(), work.begin() + lo, work.end());
  const double v_lo = work[lo];
  if (frac == 0.0 || lo + 1 >= work.size()) return v_lo;
  const double v_hi = *std::min_element(work.begin() + lo + 1, work.end());
  return v_lo + frac * (v_hi - v_lo);
}

Volume robust_normalize(const Volume& v) {
  if (v.kind != VolumeKind::Intensity) throw Error("robust_normalize expects an intensity volume");
  const double p10 = percentile(v.data, 10.0);
  const double p90 = percentile(v.data, 90.0);
  if (!(p90 > p10)) {
    std::ostringstream msg;
    msg << "degenerate intensity distribution (p10 = " << p10 << ", p90 = " << p90 << ")";
    throw Error(msg.str());
  }
  const double scale = 2.0 / (p90 - p10);
  Volume out = v;
  for (float& x : out.data) x = static_cast<float>(-1.0 + (x - p10) * scale);
  return out;
}

Volume missing_sequence_placeholder(const Volume& templ) {
  return templ.like(VolumeKind::Intensity, 0.0f);
}

float min_value(const Volume& v) {
  if (v.data.empty()) return 0.0f;
  return *std::min_element(v.data.begin(), v.data.end());
}

}  // namespace mscare

namespace mscare {

Vec3 voxel_to_world(const Volume& v, const Vec3& idx) {
  Vec3 w = v.origin;
  for (int r = 0; r < 3; ++r) {
    for (int a = 0; a < 3; ++a) w[r] += v.direction[r * 3 + a] * v.spacing[a] * idx[a];
  }
  return w;
}

Vec3 world_to_voxel(const Volume& v, const Vec3& world) {
  // Solve (D * diag(spacing)) idx = world - origin by Cramer's rule.
  double m[3][3];
  for (int r = 0; r < 3; ++r) {
    for (int a = 0; a < 3; ++a) m[r][a] = v.direction[r * 3 + a] * v.spacing[a];
  }
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  if (std::abs(det) < 1e-12) throw Error("volume direction matrix is singular");
  const Vec3 b{world[0] - v.origin[0], world[1] - v.origin[1], world[2] - v.origin[2]};
  Vec3 out{};
  for (int a = 0; a < 3; ++a) {
    double mm[3][3];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) mm[r][c] = c == a ? b[r] : m[r][c];
    }
    out[a] = (mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1]) -
              mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0]) +
              mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0])) /
             det;
  }
  return out;
}

}  // namespace mscare
