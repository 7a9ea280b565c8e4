#include "mscare/augmentation.hpp"

#include <cmath>

namespace mscare {

void AugmentationRanges::validate() const {
  if (!(translation >= 0.0)) throw Error("augmentation.translation must be >= 0");
  if (!(rotation >= 0.0)) throw Error("augmentation.rotation must be >= 0");
  if (!(iso_scale_min > 0.0 && iso_scale_min <= iso_scale_max)) {
    throw Error("augmentation.iso_scale must satisfy 0 < min <= max");
  }
  if (!(aniso_scale_min > 0.0 && aniso_scale_min <= aniso_scale_max)) {
    throw Error("augmentation.aniso_scale must satisfy 0 < min <= max");
  }
  if (elastic_nodes < 2) throw Error("augmentation.elastic_nodes must be >= 2");
  if (!(elastic >= 0.0)) throw Error("augmentation.elastic must be >= 0");
  if (!(intensity_shift >= 0.0)) throw Error("augmentation.intensity_shift must be >= 0");
  if (!(intensity_scale_min > 0.0 && intensity_scale_min <= intensity_scale_max)) {
    throw Error("augmentation.intensity_scale must satisfy 0 < min <= max");
  }
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

SpatialParams SpatialParams::identity(int nodes) {
  SpatialParams p;
  p.elastic_nodes = nodes;
  p.elastic.assign(static_cast<std::size_t>(nodes) * nodes * nodes, Vec3{0, 0, 0});
  return p;
}

SpatialParams sample_spatial_params(const AugmentationRanges& r, std::mt19937_64& rng) {
  SpatialParams p = SpatialParams::identity(r.elastic_nodes);
  for (double& t : p.translation) t = uniform(rng, -r.translation, r.translation);
  for (double& a : p.rotation) a = uniform(rng, -r.rotation, r.rotation);
  p.iso_scale = uniform(rng, r.iso_scale_min, r.iso_scale_max);
  for (double& s : p.aniso_scale) s = uniform(rng, r.aniso_scale_min, r.aniso_scale_max);
  for (Vec3& d : p.elastic) {
    for (double& c : d) c = uniform(rng, -r.elastic, r.elastic);
  }
  return p;
}

IntensityParams sample_intensity_params(const AugmentationRanges& r, const SequenceMask& present, std::mt19937_64& rng) {
  IntensityParams p;
  for (int s = 0; s < kSequenceCount; ++s) {
    if (!present[s]) continue;
    p.shift[s] = uniform(rng, -r.intensity_shift, r.intensity_shift);
    p.scale[s] = uniform(rng, r.intensity_scale_min, r.intensity_scale_max);
    p.sampled[s] = true;
  }
  return p;
}

namespace {

using Mat3 = std::array<double, 9>;

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
    }
  }
  return c;
}

// Rotation by `a` about array axis `axis`.
Mat3 axis_rotation(int axis, double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m{1, 0, 0, 0, 1, 0, 0, 0, 1};
  const int i = (axis + 1) % 3, j = (axis + 2) % 3;
  m[i * 3 + i] = c;
  m[i * 3 + j] = -s;
  m[j * 3 + i] = s;
  m[j * 3 + j] = c;
  return m;
}

// Trilinear interpolation of the node grid at voxel p.
Vec3 elastic_at(const SpatialParams& p, const Shape3& shape, int z, int y, int x) {
  const int n = p.elastic_nodes;
  const int pos[3] = {z, y, x};
  int i0[3], i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double g = shape[a] > 1 ? pos[a] * static_cast<double>(n - 1) / (shape[a] - 1) : 0.0;
    i0[a] = std::min(static_cast<int>(std::floor(g)), n - 1);
    i1[a] = std::min(i0[a] + 1, n - 1);
    f[a] = g - i0[a];
  }
  Vec3 d{0, 0, 0};
  for (int c = 0; c < 8; ++c) {
    const int iz = c & 4 ? i1[0] : i0[0];
    const int iy = c & 2 ? i1[1] : i0[1];
    const int ix = c & 1 ? i1[2] : i0[2];
    const double w = (c & 4 ? f[0] : 1 - f[0]) * (c & 2 ? f[1] : 1 - f[1]) * (c & 1 ? f[2] : 1 - f[2]);
    if (w == 0.0) continue;
    const Vec3& node = p.elastic[(static_cast<std::size_t>(iz) * n + iy) * n + ix];
    for (int a = 0; a < 3; ++a) d[a] += w * node[a];
  }
  return d;
}

}  // namespace

SpatialTransform SpatialTransform::build(const Shape3& shape, const SpatialParams& p) {
  const std::size_t nodes = static_cast<std::size_t>(p.elastic_nodes) * p.elastic_nodes * p.elastic_nodes;
  if (p.elastic_nodes < 2 || p.elastic.size() != nodes) throw Error("elastic grid does not match its node count");
  const Mat3 r = mul(mul(axis_rotation(0, p.rotation[0]), axis_rotation(1, p.rotation[1])),
                     axis_rotation(2, p.rotation[2]));
  Vec3 c, s;
  for (int a = 0; a < 3; ++a) {
    c[a] = (shape[a] - 1) / 2.0;
    s[a] = p.iso_scale * p.aniso_scale[a];
    if (!(s[a] > 0.0)) throw Error("augmentation scale must be positive");
  }
  bool has_elastic = false;
  for (const Vec3& d : p.elastic) has_elastic = has_elastic || d[0] != 0.0 || d[1] != 0.0 || d[2] != 0.0;

  SpatialTransform t;
  t.shape = shape;
  t.source.resize(3 * voxel_count(shape));
  std::size_t k = 0;
  for (int z = 0; z < shape[0]; ++z) {
    for (int y = 0; y < shape[1]; ++y) {
      for (int x = 0; x < shape[2]; ++x) {
        Vec3 d{0, 0, 0};
        if (has_elastic) d = elastic_at(p, shape, z, y, x);
        const Vec3 q{(z + d[0] - p.translation[0] - c[0]) / s[0], (y + d[1] - p.translation[1] - c[1]) / s[1],
                     (x + d[2] - p.translation[2] - c[2]) / s[2]};
        for (int a = 0; a < 3; ++a) {
          // R^T q
          const double v = r[0 * 3 + a] * q[0] + r[1 * 3 + a] * q[1] + r[2 * 3 + a] * q[2];
          t.source[k++] = static_cast<float>(c[a] + v);
        }
      }
    }
  }
  return t;
}

Volume apply_spatial(const Volume& v, const SpatialTransform& t, float pad_value) {
  if (t.shape != v.shape) throw Error("spatial transform was built for a different grid");
  Volume out = v.like(v.kind, pad_value);
  const int nz = v.shape[0], ny = v.shape[1], nx = v.shape[2];
  const std::size_t n = v.size();
  if (v.kind == VolumeKind::Labelmap) {
    for (std::size_t i = 0; i < n; ++i) {
      const int z = static_cast<int>(std::floor(t.source[3 * i] + 0.5f));
      const int y = static_cast<int>(std::floor(t.source[3 * i + 1] + 0.5f));
      const int x = static_cast<int>(std::floor(t.source[3 * i + 2] + 0.5f));
      if (v.contains(z, y, x)) out.data[i] = v.at(z, y, x);
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const float qz = t.source[3 * i], qy = t.source[3 * i + 1], qx = t.source[3 * i + 2];
    const float fz0 = std::floor(qz), fy0 = std::floor(qy), fx0 = std::floor(qx);
    if (fz0 < -1 || fy0 < -1 || fx0 < -1 || fz0 > nz || fy0 > ny || fx0 > nx) continue;
    const int z0 = static_cast<int>(fz0), y0 = static_cast<int>(fy0), x0 = static_cast<int>(fx0);
    const float fz = qz - fz0, fy = qy - fy0, fx = qx - fx0;
    float acc = 0.0f;
    for (int c = 0; c < 8; ++c) {
      const int dz = (c >> 2) & 1, dy = (c >> 1) & 1, dx = c & 1;
      const float w = (dz ? fz : 1 - fz) * (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx);
      if (w == 0.0f) continue;
      const int z = z0 + dz, y = y0 + dy, x = x0 + dx;
      acc += w * (v.contains(z, y, x) ? v.at(z, y, x) : pad_value);
    }
    out.data[i] = acc;
  }
  return out;
}

Volume apply_spatial(const Volume& v, const SpatialParams& p, float pad_value) {
  return apply_spatial(v, SpatialTransform::build(v.shape, p), pad_value);
}

Volume apply_intensity(const Volume& v, const IntensityParams& p, Sequence seq) {
  const int s = static_cast<int>(seq);
  if (!p.sampled[s]) throw Error("no intensity parameters were sampled for sequence " + std::string(to_string(seq)));
  if (v.kind != VolumeKind::Intensity) throw Error("intensity augmentation applies to intensity volumes only");
  Volume out = v;
  const double scale = p.scale[s], shift = p.shift[s];
  for (float& x : out.data) x = static_cast<float>(x * scale + shift);
  return out;
}

}  // namespace mscare
