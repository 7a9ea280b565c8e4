#include "mscare/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <type_traits>

namespace mscare {

namespace {

constexpr int kHeaderSize = 348;
constexpr float kVoxOffset = 352.0f;

enum DataType : int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
  kUInt32 = 768,
};

// Field offsets inside the 348-byte NIfTI-1 header.
namespace off {
constexpr int sizeof_hdr = 0, dim = 40, datatype = 70, bitpix = 72, pixdim = 76, vox_offset = 108,
              scl_slope = 112, scl_inter = 116, xyzt_units = 123, descrip = 148, qform_code = 252,
              sform_code = 254, quatern_b = 256, qoffset_x = 268, srow_x = 280, magic = 344;
}

template <typename T>
T byteswap_value(T v) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

class HeaderView {
 public:
  HeaderView(const unsigned char* raw, bool swapped) : raw_(raw), swapped_(swapped) {}
  template <typename T>
  T get(int offset) const {
    T v;
    std::memcpy(&v, raw_ + offset, sizeof(T));
    return swapped_ ? byteswap_value(v) : v;
  }

 private:
  const unsigned char* raw_;
  bool swapped_;
};

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("cannot open volume: " + path.string() + " does not exist");
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw Error("cannot open volume: " + path.string());
  std::vector<unsigned char> buf;
  unsigned char chunk[1 << 16];
  for (;;) {
    int n = gzread(f, chunk, sizeof(chunk));
    if (n < 0) {
      gzclose(f);
      throw Error("malformed volume: " + path.string() + " (decompression failed)");
    }
    if (n == 0) break;
    buf.insert(buf.end(), chunk, chunk + n);
  }
  gzclose(f);
  return buf;
}

template <typename T>
void convert(const unsigned char* src, std::size_t n, bool swapped, std::vector<float>& dst) {
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, src + i * sizeof(T), sizeof(T));
    if (swapped) v = byteswap_value(v);
    dst[i] = static_cast<float>(v);
  }
}

using Mat3 = std::array<double, 9>;

Mat3 quaternion_to_rotation(double b, double c, double d) {
  double a = 1.0 - (b * b + c * c + d * d);
  a = a < 1e-7 ? 0.0 : std::sqrt(a);
  if (a == 0.0) {
    const double n = std::sqrt(b * b + c * c + d * d);
    b /= n;
    c /= n;
    d /= n;
  }
  return {a * a + b * b - c * c - d * d, 2 * (b * c - a * d),         2 * (b * d + a * c),
          2 * (b * c + a * d),         a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
          2 * (b * d - a * c),         2 * (c * d + a * b),         a * a + d * d - c * c - b * b};
}

// Orthonormal rotation (columns = i, j, k axis directions) to NIfTI quaternion + qfac.
void rotation_to_quaternion(Mat3 r, float& qb, float& qc, float& qd, float& qfac) {
  const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                     r[2] * (r[3] * r[7] - r[4] * r[6]);
  qfac = 1.0f;
  if (det < 0) {
    qfac = -1.0f;
    r[2] = -r[2];
    r[5] = -r[5];
    r[8] = -r[8];
  }
  const double r11 = r[0], r12 = r[1], r13 = r[2], r21 = r[3], r22 = r[4], r23 = r[5], r31 = r[6],
               r32 = r[7], r33 = r[8];
  double a = r11 + r22 + r33 + 1.0, b, c, d;
  if (a > 0.5) {
    a = 0.5 * std::sqrt(a);
    b = 0.25 * (r32 - r23) / a;
    c = 0.25 * (r13 - r31) / a;
    d = 0.25 * (r21 - r12) / a;
  } else {
    const double xd = 1.0 + r11 - (r22 + r33), yd = 1.0 + r22 - (r11 + r33), zd = 1.0 + r33 - (r11 + r22);
    if (xd > 1.0) {
      b = 0.5 * std::sqrt(xd);
      c = 0.25 * (r12 + r21) / b;
      d = 0.25 * (r13 + r31) / b;
      a = 0.25 * (r32 - r23) / b;
    } else if (yd > 1.0) {
      c = 0.5 * std::sqrt(yd);
      b = 0.25 * (r12 + r21) / c;
      d = 0.25 * (r23 + r32) / c;
      a = 0.25 * (r13 - r31) / c;
    } else {
      d = 0.5 * std::sqrt(zd);
      b = 0.25 * (r13 + r31) / d;
      c = 0.25 * (r23 + r32) / d;
      a = 0.25 * (r21 - r12) / d;
    }
    if (a < 0.0) {
      b = -b;
      c = -c;
      d = -d;
    }
  }
  qb = static_cast<float>(b);
  qc = static_cast<float>(c);
  qd = static_cast<float>(d);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

bool is_nifti_path(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  return ends_with(name, ".nii") || ends_with(name, ".nii.gz");
}

Volume load_volume(const std::filesystem::path& path, VolumeKind kind) {
  const auto buf = read_all(path);
  const std::string where = path.string();
  if (buf.size() < static_cast<std::size_t>(kHeaderSize)) throw Error("malformed volume: " + where + " (truncated header)");

  int32_t hdr_size;
  std::memcpy(&hdr_size, buf.data(), 4);
  bool swapped = false;
  if (hdr_size != kHeaderSize) {
    if (byteswap_value(hdr_size) != kHeaderSize) throw Error("malformed volume: " + where + " (bad sizeof_hdr)");
    swapped = true;
  }
  if (std::memcmp(buf.data() + off::magic, "n+1", 4) != 0 && std::memcmp(buf.data() + off::magic, "ni1", 4) != 0) {
    throw Error("malformed volume: " + where + " (bad magic)");
  }
  if (std::memcmp(buf.data() + off::magic, "ni1", 4) == 0) {
    throw Error("malformed volume: " + where + " (detached .hdr/.img pairs are not supported)");
  }
  HeaderView h(buf.data(), swapped);

  std::array<int16_t, 8> dim;
  for (int i = 0; i < 8; ++i) dim[i] = h.get<int16_t>(off::dim + 2 * i);
  if (dim[0] < 1 || dim[0] > 7) throw Error("malformed volume: " + where + " (bad dim[0])");
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[i] > 1) throw Error("non-3D payload in " + where + " (dim[" + std::to_string(i) + "] = " + std::to_string(dim[i]) + ")");
  }
  if (dim[0] < 3) throw Error("non-3D payload in " + where + " (dim[0] = " + std::to_string(dim[0]) + ")");
  for (int i = 1; i <= 3; ++i) {
    if (dim[i] < 1) throw Error("malformed volume: " + where + " (non-positive dimension)");
  }

  const auto datatype = h.get<int16_t>(off::datatype);
  std::array<float, 8> pixdim;
  for (int i = 0; i < 8; ++i) pixdim[i] = h.get<float>(off::pixdim + 4 * i);
  const float vox_offset = h.get<float>(off::vox_offset);
  const float slope = h.get<float>(off::scl_slope);
  const float inter = h.get<float>(off::scl_inter);

  Volume v({dim[3], dim[2], dim[1]}, {1, 1, 1}, kind);
  for (int a = 0; a < 3; ++a) {
    const double sp = std::abs(pixdim[3 - a]);
    if (!(sp > 0.0)) throw Error("malformed volume: " + where + " (non-positive pixdim)");
    v.spacing[a] = sp;
  }

  // Affine columns for the NIfTI i, j, k axes (world units per voxel) and translation.
  std::array<std::array<double, 3>, 3> col{};
  std::array<double, 3> trans{};
  const auto sform_code = h.get<int16_t>(off::sform_code);
  const auto qform_code = h.get<int16_t>(off::qform_code);
  if (sform_code > 0) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) col[c][r] = h.get<float>(off::srow_x + 16 * r + 4 * c);
      trans[r] = h.get<float>(off::srow_x + 16 * r + 12);
    }
  } else if (qform_code > 0) {
    const Mat3 rot = quaternion_to_rotation(h.get<float>(off::quatern_b), h.get<float>(off::quatern_b + 4),
                                            h.get<float>(off::quatern_b + 8));
    const double qfac = pixdim[0] < 0 ? -1.0 : 1.0;
    for (int r = 0; r < 3; ++r) {
      col[0][r] = rot[r * 3 + 0] * pixdim[1];
      col[1][r] = rot[r * 3 + 1] * pixdim[2];
      col[2][r] = rot[r * 3 + 2] * pixdim[3] * qfac;
      trans[r] = h.get<float>(off::qoffset_x + 4 * r);
    }
  } else {
    for (int c = 0; c < 3; ++c) col[c][c] = pixdim[c + 1];
  }
  for (int a = 0; a < 3; ++a) {
    const auto& c = col[2 - a];
    const double n = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    for (int r = 0; r < 3; ++r) v.direction[r * 3 + a] = n > 0 ? c[r] / n : (r == a ? 1.0 : 0.0);
  }
  // Array axis a maps to NIfTI axis 2 - a, so world rows keep their order.
  v.origin = {trans[0], trans[1], trans[2]};

  std::size_t elem = 0;
  switch (datatype) {
    case kUInt8: case kInt8: elem = 1; break;
    case kInt16: case kUInt16: elem = 2; break;
    case kInt32: case kUInt32: case kFloat32: elem = 4; break;
    case kFloat64: elem = 8; break;
    default: throw Error("malformed volume: " + where + " (unsupported datatype " + std::to_string(datatype) + ")");
  }
  const std::size_t n = v.size();
  const std::size_t begin = vox_offset >= kHeaderSize ? static_cast<std::size_t>(vox_offset) : kVoxOffset;
  if (buf.size() < begin + n * elem) throw Error("malformed volume: " + where + " (truncated voxel data)");
  const unsigned char* src = buf.data() + begin;
  switch (datatype) {
    case kUInt8: convert<uint8_t>(src, n, swapped, v.data); break;
    case kInt8: convert<int8_t>(src, n, swapped, v.data); break;
    case kInt16: convert<int16_t>(src, n, swapped, v.data); break;
    case kUInt16: convert<uint16_t>(src, n, swapped, v.data); break;
    case kInt32: convert<int32_t>(src, n, swapped, v.data); break;
    case kUInt32: convert<uint32_t>(src, n, swapped, v.data); break;
    case kFloat32: convert<float>(src, n, swapped, v.data); break;
    case kFloat64: convert<double>(src, n, swapped, v.data); break;
  }
  if (slope != 0.0f && std::isfinite(slope) && !(slope == 1.0f && inter == 0.0f)) {
    for (float& x : v.data) x = x * slope + inter;
  }
  if (kind == VolumeKind::Labelmap) v.validate();
  return v;
}

void save_volume(const Volume& v, const std::filesystem::path& path) {
  if (v.data.size() != voxel_count(v.shape)) throw Error("cannot save volume with inconsistent shape");
  std::array<unsigned char, 352> hdr{};
  auto put = [&hdr](int offset, auto value) { std::memcpy(hdr.data() + offset, &value, sizeof(value)); };

  int16_t datatype = kFloat32, bitpix = 32;
  if (v.kind == VolumeKind::Labelmap) {
    const float mx = v.data.empty() ? 0.0f : *std::max_element(v.data.begin(), v.data.end());
    if (mx <= 255.0f) {
      datatype = kUInt8;
      bitpix = 8;
    } else {
      datatype = kInt16;
      bitpix = 16;
    }
  }
  put(off::sizeof_hdr, int32_t{kHeaderSize});
  const int16_t dim[8] = {3, int16_t(v.shape[2]), int16_t(v.shape[1]), int16_t(v.shape[0]), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put(off::dim + 2 * i, dim[i]);
  put(off::datatype, datatype);
  put(off::bitpix, bitpix);

  // NIfTI axis i = array axis 2.
  Mat3 rot;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[r * 3 + c] = v.direction[r * 3 + (2 - c)];
  float qb, qc, qd, qfac;
  rotation_to_quaternion(rot, qb, qc, qd, qfac);
  const float pixdim[8] = {qfac, float(v.spacing[2]), float(v.spacing[1]), float(v.spacing[0]), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put(off::pixdim + 4 * i, pixdim[i]);
  put(off::vox_offset, kVoxOffset);
  put(off::scl_slope, 1.0f);
  put(off::scl_inter, 0.0f);
  hdr[off::xyzt_units] = 2;  // millimetres
  std::strncpy(reinterpret_cast<char*>(hdr.data() + off::descrip), "mscare", 79);
  put(off::qform_code, int16_t{1});
  put(off::sform_code, int16_t{1});
  put(off::quatern_b, qb);
  put(off::quatern_b + 4, qc);
  put(off::quatern_b + 8, qd);
  for (int r = 0; r < 3; ++r) {
    put(off::qoffset_x + 4 * r, float(v.origin[r]));
    for (int c = 0; c < 3; ++c) put(off::srow_x + 16 * r + 4 * c, float(rot[r * 3 + c] * v.spacing[2 - c]));
    put(off::srow_x + 16 * r + 12, float(v.origin[r]));
  }
  std::memcpy(hdr.data() + off::magic, "n+1", 4);

  std::vector<unsigned char> payload(v.size() * (bitpix / 8));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (datatype == kUInt8) {
      payload[i] = static_cast<uint8_t>(std::lround(v.data[i]));
    } else if (datatype == kInt16) {
      const auto s = static_cast<int16_t>(std::lround(v.data[i]));
      std::memcpy(&payload[2 * i], &s, 2);
    } else {
      std::memcpy(&payload[4 * i], &v.data[i], 4);
    }
  }

  const std::string name = path.string();
  if (ends_with(name, ".gz")) {
    gzFile f = gzopen(name.c_str(), "wb6");
    if (!f) throw Error("cannot write volume: " + name);
    bool ok = gzwrite(f, hdr.data(), hdr.size()) == int(hdr.size());
    ok = ok && (payload.empty() || gzwrite(f, payload.data(), unsigned(payload.size())) == int(payload.size()));
    ok = (gzclose(f) == Z_OK) && ok;
    if (!ok) throw Error("cannot write volume: " + name);
  } else {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(hdr.data()), hdr.size());
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error("cannot write volume: " + name);
  }
}

}  // namespace mscare
