#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "mscare/volume.hpp"

using namespace mscare;

namespace {

Volume ramp(Shape3 s, Vec3 sp, double a, double b, double c) {
  Volume v(s, sp, VolumeKind::Intensity);
  for (int z = 0; z < s[0]; ++z)
    for (int y = 0; y < s[1]; ++y)
      for (int x = 0; x < s[2]; ++x) v.at(z, y, x) = static_cast<float>(a * z + b * y + c * x);
  return v;
}

double sorted_percentile(std::vector<float> v, double pct) {
  std::sort(v.begin(), v.end());
  const double r = pct / 100.0 * (v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(r);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (r - i) * (static_cast<double>(v[i + 1]) - v[i]);
}

}  // namespace

TEST_CASE("resample_isotropic grid arithmetic") {
  Volume v({10, 10, 10}, {2.4, 2.4, 2.4}, VolumeKind::Intensity, 1.0f);
  const Volume r = resample_isotropic(v, 1.2);
  CHECK(r.shape == Shape3{20, 20, 20});
  CHECK(r.spacing == Vec3{1.2, 1.2, 1.2});

  Volume aniso({7, 11, 5}, {3.0, 0.9, 1.7}, VolumeKind::Intensity);
  const Volume q = resample_isotropic(aniso, 1.2);
  for (int a = 0; a < 3; ++a) {
    CHECK(q.shape[a] == std::lround(aniso.shape[a] * aniso.spacing[a] / 1.2));
    CHECK(std::abs(q.shape[a] * 1.2 - aniso.shape[a] * aniso.spacing[a]) <= 1.2);
  }
  CHECK_THROWS_AS(resample_isotropic(v, 0.0), Error);
  CHECK_THROWS_AS(resample_isotropic(v, -1.0), Error);
}

TEST_CASE("resampling at the current spacing is the identity") {
  std::mt19937 rng(3);
  Volume v({6, 7, 8}, {1.2, 1.2, 1.2}, VolumeKind::Intensity);
  for (float& x : v.data) x = std::uniform_real_distribution<float>(-5, 5)(rng);
  v.origin = {1.5, -2.0, 3.25};
  const Volume r = resample_isotropic(v, 1.2);
  CHECK(r.data == v.data);
  CHECK(r.origin == v.origin);
}

TEST_CASE("trilinear resampling reproduces a linear ramp") {
  const double a = -0.05, b = 0.2, c = 0.1;
  const Volume v = ramp({10, 10, 10}, {2.4, 2.4, 2.4}, a, b, c);
  const Volume r = resample_isotropic(v, 1.2);
  int checked = 0;
  for (int z = 0; z < r.shape[0]; ++z)
    for (int y = 0; y < r.shape[1]; ++y)
      for (int x = 0; x < r.shape[2]; ++x) {
        // Output voxel centres in input voxel coordinates.
        const double iz = (z + 0.5) * 0.5 - 0.5, iy = (y + 0.5) * 0.5 - 0.5, ix = (x + 0.5) * 0.5 - 0.5;
        const auto inside = [](double t) { return t >= 0.0 && t <= 9.0; };
        if (!inside(iz) || !inside(iy) || !inside(ix)) continue;  // clamped border
        CHECK(std::abs(r.at(z, y, x) - (a * iz + b * iy + c * ix)) <= 1e-6);
        ++checked;
      }
  CHECK(checked == 18 * 18 * 18);
  // Physical positions agree: world position of an output voxel maps to the same ramp value.
  const Vec3 w = voxel_to_world(r, {5, 6, 7});
  const Vec3 src = world_to_voxel(v, w);
  CHECK(std::abs(r.at(5, 6, 7) - (a * src[0] + b * src[1] + c * src[2])) <= 1e-6);
}

TEST_CASE("nearest-neighbour labelmap resampling keeps the label value set") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Volume v({9, 8, 7}, {1.0 + trial * 0.1, 2.0, 0.7}, VolumeKind::Labelmap);
    std::set<float> in;
    for (float& x : v.data) {
      x = static_cast<float>(rng() % 3 == 0 ? 0 : 1 + rng() % 5);
      in.insert(x);
    }
    const Volume r = resample_isotropic(v, 1.2);
    for (float x : r.data) CHECK(in.count(x) == 1);
  }
}

TEST_CASE("compute_label_center") {
  Volume v({10, 10, 20}, {1, 1, 1}, VolumeKind::Labelmap);
  v.at(5, 6, 7) = 2;
  CHECK(compute_label_center(v) == Vec3{5, 6, 7});

  Volume box({10, 10, 20}, {1, 1, 1}, VolumeKind::Labelmap);
  for (int z = 2; z <= 6; ++z)
    for (int y = 0; y <= 4; ++y)
      for (int x = 10; x <= 14; ++x) box.at(z, y, x) = 1;
  CHECK(compute_label_center(box) == Vec3{4, 2, 12});

  std::mt19937 rng(5);
  for (int t = 0; t < 20; ++t) {
    Volume r({8, 9, 10}, {1, 1, 1}, VolumeKind::Labelmap);
    for (int k = 0; k < 5; ++k) r.at(rng() % 8, rng() % 9, rng() % 10) = 1;
    Shape3 lo{99, 99, 99}, hi{-1, -1, -1};
    for (int z = 0; z < 8; ++z)
      for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 10; ++x) {
          if (r.at(z, y, x) == 0) continue;
          lo = {std::min(lo[0], z), std::min(lo[1], y), std::min(lo[2], x)};
          hi = {std::max(hi[0], z), std::max(hi[1], y), std::max(hi[2], x)};
        }
    const Vec3 c = compute_label_center(r);
    for (int a = 0; a < 3; ++a) {
      CHECK(c[a] == 0.5 * (lo[a] + hi[a]));
      CHECK(c[a] >= lo[a]);
      CHECK(c[a] <= hi[a]);
    }
  }

  Volume empty({4, 4, 4}, {1, 1, 1}, VolumeKind::Labelmap);
  CHECK_THROWS_AS(compute_label_center(empty), Error);
}

TEST_CASE("extract_roi") {
  std::mt19937 rng(2);
  Volume v({20, 22, 24}, {1.2, 1.2, 1.2}, VolumeKind::Intensity);
  for (float& x : v.data) x = std::uniform_real_distribution<float>(0, 1)(rng);

  SUBCASE("fully inside is a plain crop") {
    const RoiSpec roi{{10, 11, 12}, {8, 6, 4}, -7.0f};
    const Volume r = extract_roi(v, roi);
    const Shape3 s = roi_start(roi.center, roi.size);
    CHECK(r.shape == roi.size);
    CHECK(r.spacing == v.spacing);
    for (int z = 0; z < 8; ++z)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 4; ++x) CHECK(r.at(z, y, x) == v.at(s[0] + z, s[1] + y, s[2] + x));
    // Origin moves with the window.
    const Vec3 w0 = voxel_to_world(r, {0, 0, 0});
    const Vec3 ws = voxel_to_world(v, {double(s[0]), double(s[1]), double(s[2])});
    for (int a = 0; a < 3; ++a) CHECK(w0[a] == doctest::Approx(ws[a]));
  }

  SUBCASE("ROI at a corner pads outside the volume") {
    const RoiSpec roi{{0, 0, 0}, {6, 6, 6}, -3.5f};
    const Volume r = extract_roi(v, roi);
    const Shape3 s = roi_start(roi.center, roi.size);
    for (int z = 0; z < 6; ++z)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
          const int sz = s[0] + z, sy = s[1] + y, sx = s[2] + x;
          if (v.contains(sz, sy, sx)) {
            CHECK(r.at(z, y, x) == v.at(sz, sy, sx));
          } else {
            CHECK(r.at(z, y, x) == -3.5f);
          }
        }
  }

  SUBCASE("192^3 ROI around a 150x160x140 scan") {
    Volume big({150, 160, 140}, {1.2, 1.2, 1.2}, VolumeKind::Intensity, 5.0f);
    const RoiSpec roi{scan_center(big), {192, 192, 192}, -1.0f};
    const Volume r = extract_roi(big, roi);
    CHECK(r.shape == Shape3{192, 192, 192});
    // Brute-force mapping: output voxel i covers source index start + i.
    const Shape3 s = roi_start(roi.center, roi.size);
    for (int a = 0; a < 3; ++a) {
      const int before = -s[a];
      const int after = 192 - big.shape[a] - before;
      CHECK(before >= 0);
      CHECK(std::abs(before - after) <= 1);
    }
    std::size_t inside = 0;
    for (float x : r.data) inside += x == 5.0f;
    CHECK(inside == voxel_count(big.shape));
  }

  CHECK_THROWS_AS(extract_roi(v, RoiSpec{{0, 0, 0}, {0, 4, 4}, 0.0f}), Error);
}

TEST_CASE("robust_normalize") {
  SUBCASE("ramp 0..100") {
    Volume v({1, 1, 101}, {1, 1, 1}, VolumeKind::Intensity);
    for (int i = 0; i <= 100; ++i) v.data[i] = static_cast<float>(i);
    const Volume n = robust_normalize(v);
    CHECK(n.data[10] == doctest::Approx(-1.0).epsilon(1e-7));
    CHECK(n.data[90] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(std::abs(n.data[50]) <= 1e-7);
    CHECK(n.data[100] == doctest::Approx(1.25).epsilon(1e-7));
    CHECK(n.data[0] == doctest::Approx(-1.25).epsilon(1e-7));  // no clamping
  }
  SUBCASE("recomputed percentiles are -1 and +1") {
    std::mt19937 rng(17);
    for (int t = 0; t < 50; ++t) {
      Volume v({8, 9, 10}, {1, 1, 1}, VolumeKind::Intensity);
      std::lognormal_distribution<float> d(t * 0.1f, 0.8f);
      for (float& x : v.data) x = d(rng);
      const Volume n = robust_normalize(v);
      CHECK(std::abs(sorted_percentile(n.data, 10) + 1.0) <= 1e-6);
      CHECK(std::abs(sorted_percentile(n.data, 90) - 1.0) <= 1e-6);
    }
  }
  SUBCASE("percentile matches a sorting oracle") {
    std::mt19937 rng(1);
    std::vector<float> xs(777);
    for (float& x : xs) x = std::uniform_real_distribution<float>(-9, 9)(rng);
    for (double p : {0.0, 3.3, 10.0, 50.0, 90.0, 99.9, 100.0}) {
      CHECK(percentile(xs, p) == doctest::Approx(sorted_percentile(xs, p)).epsilon(1e-12));
    }
  }
  SUBCASE("constant volume is rejected") {
    Volume v({4, 4, 4}, {1, 1, 1}, VolumeKind::Intensity, 3.0f);
    try {
      robust_normalize(v);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("degenerate intensity distribution") != std::string::npos);
    }
  }
}

TEST_CASE("missing_sequence_placeholder") {
  Volume t({5, 6, 7}, {1.1, 1.2, 1.3}, VolumeKind::Labelmap, 2.0f);
  t.origin = {1, 2, 3};
  const Volume p = missing_sequence_placeholder(t);
  CHECK(p.shape == t.shape);
  CHECK(p.spacing == t.spacing);
  CHECK(p.origin == t.origin);
  CHECK(p.kind == VolumeKind::Intensity);
  double sum = 0;
  for (float x : p.data) sum += x;
  CHECK(sum == 0.0);
}

TEST_CASE("Volume validation") {
  Volume v({2, 2, 2}, {1, 1, 1}, VolumeKind::Labelmap);
  CHECK_NOTHROW(v.validate());
  v.data[3] = 1.5f;
  CHECK_THROWS_AS(v.validate(), Error);
  v.data[3] = -1.0f;
  CHECK_THROWS_AS(v.validate(), Error);
  Volume w({2, 2, 2}, {1, 0, 1}, VolumeKind::Intensity);
  CHECK_THROWS_AS(w.validate(), Error);
}

TEST_CASE("voxel/world round trip with an oblique direction") {
  Volume v({4, 4, 4}, {1.5, 0.7, 2.0}, VolumeKind::Intensity);
  const double c = std::cos(0.3), s = std::sin(0.3);
  v.direction = {c, -s, 0, s, c, 0, 0, 0, 1};
  v.origin = {10, -4, 2};
  const Vec3 idx{1.25, -3.0, 7.5};
  const Vec3 back = world_to_voxel(v, voxel_to_world(v, idx));
  for (int a = 0; a < 3; ++a) CHECK(back[a] == doctest::Approx(idx[a]).epsilon(1e-12));
  v.direction = {1, 0, 0, 1, 0, 0, 0, 0, 1};
  CHECK_THROWS_AS(world_to_voxel(v, idx), Error);
}
