#include "mscare/phantom.hpp"

#include <cmath>
#include <random>

#include "mscare/augmentation.hpp"
#include "mscare/inference.hpp"
#include "mscare/nifti.hpp"

namespace mscare {

namespace fs = std::filesystem;

ContrastTable default_contrast() {
  //        air  body  LV    RV    healthy scar  edema
  return {{{0.0, 0.30, 0.60, 0.55, 0.10, 1.00, 0.15},    // LGE
           {0.0, 0.25, 0.30, 0.30, 0.35, 0.50, 1.00},    // T2
           {0.0, 0.35, 1.00, 0.95, 0.20, 0.25, 0.30}}};  // bSSFP
}

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (grid_size[a] < 8) throw Error("phantom.grid_size must be >= 8 per axis");
  }
  if (!(spacing > 0.0)) throw Error("phantom.spacing must be positive");
  if (!(lv_radius > 0.0)) throw Error("phantom.lv_radius must be positive");
  if (!(lv_elongation > 0.0)) throw Error("phantom.lv_elongation must be positive");
  if (!(wall_thickness > 0.0)) throw Error("phantom.wall_thickness must be positive");
  if (!(rv_radius > 0.0)) throw Error("phantom.rv_radius must be positive");
  if (scar_count < 0 || edema_count < 0) throw Error("phantom lesion counts must be >= 0");
  if (!(lesion_radius > 0.0)) throw Error("phantom.lesion_radius must be positive");
  if (!(noise_sigma >= 0.0)) throw Error("phantom.noise_sigma must be >= 0");
  if (!(center_jitter >= 0.0)) throw Error("phantom.center_jitter must be >= 0");
}

namespace {

using S = PhantomStructure;

struct Ellipsoid {
  Vec3 c, r;
  bool inside(double z, double y, double x) const {
    const double a = (z - c[0]) / r[0], b = (y - c[1]) / r[1], d = (x - c[2]) / r[2];
    return a * a + b * b + d * d <= 1.0;
  }
};

// Point on the mid-wall at azimuth theta (about axis 0) and elevation phi.
Vec3 midwall_point(const Vec3& c, const Vec3& mid, double theta, double phi) {
  return {c[0] + mid[0] * std::sin(phi), c[1] + mid[1] * std::cos(phi) * std::sin(theta),
          c[2] + mid[2] * std::cos(phi) * std::cos(theta)};
}

// Restricts `tissue` voxels equal to `s` to their largest 26-connected region;
// the rest become `fallback`.
void keep_largest(std::vector<uint8_t>& tissue, const Shape3& shape, S s, S fallback) {
  Volume v(shape, {1, 1, 1}, VolumeKind::Labelmap);
  for (std::size_t i = 0; i < tissue.size(); ++i) v.data[i] = tissue[i] == static_cast<uint8_t>(s);
  const Volume kept = largest_component_filter(v, 26);
  for (std::size_t i = 0; i < tissue.size(); ++i) {
    if (v.data[i] != 0.0f && kept.data[i] == 0.0f) tissue[i] = static_cast<uint8_t>(fallback);
  }
}

}  // namespace

SubjectSample generate_phantom(const PhantomSpec& spec, const LabelSchema& schema) {
  spec.validate();
  schema.validate();
  std::mt19937_64 rng(spec.seed);
  const Shape3 n = spec.grid_size;
  const double h = spec.spacing;

  Vec3 c;
  for (int a = 0; a < 3; ++a) c[a] = (n[a] - 1) / 2.0 + uniform(rng, -spec.center_jitter, spec.center_jitter);
  const Vec3 lv_r{spec.lv_radius * spec.lv_elongation / h, spec.lv_radius / h, spec.lv_radius / h};
  const double w = spec.wall_thickness / h;
  const Ellipsoid lv{c, lv_r};
  const Ellipsoid outer{c, {lv_r[0] + w, lv_r[1] + w, lv_r[2] + w}};
  const Vec3 rv_c{c[0] + spec.rv_offset[0] / h, c[1] + spec.rv_offset[1] / h, c[2] + spec.rv_offset[2] / h};
  const double rv = spec.rv_radius / h;
  const Ellipsoid rv_e{rv_c, {rv * spec.lv_elongation, rv, rv}};
  const Vec3 gc{(n[0] - 1) / 2.0, (n[1] - 1) / 2.0, (n[2] - 1) / 2.0};
  const Ellipsoid body{gc, {0.46 * n[0], 0.44 * n[1], 0.44 * n[2]}};

  std::vector<uint8_t> tissue(voxel_count(n), static_cast<uint8_t>(S::Air));
  std::size_t shell_voxels = 0;
  std::size_t i = 0;
  for (int z = 0; z < n[0]; ++z)
    for (int y = 0; y < n[1]; ++y)
      for (int x = 0; x < n[2]; ++x, ++i) {
        S s = S::Air;
        if (body.inside(z, y, x)) s = S::Body;
        if (lv.inside(z, y, x)) {
          s = S::LVBlood;
        } else if (outer.inside(z, y, x)) {
          s = S::Healthy;
          ++shell_voxels;
        } else if (rv_e.inside(z, y, x)) {
          s = S::RVBlood;
        }
        tissue[i] = static_cast<uint8_t>(s);
      }
  if (shell_voxels == 0) throw Error("phantom myocardial shell is empty");

  // Lesions: overlapping balls chained along the mid-wall, clipped to the shell.
  const int lesions = spec.scar_count + spec.edema_count;
  if (lesions > 0) {
    const Vec3 mid{lv_r[0] + w / 2, lv_r[1] + w / 2, lv_r[2] + w / 2};
    const double lr = spec.lesion_radius / h;
    const double step = lr / std::max(mid[1], mid[2]);  // one radius of arc per blob
    if (step * lesions > 2.0 * M_PI) throw Error("lesions cannot fit in the myocardial shell");
    const double theta0 = uniform(rng, 0.0, 2.0 * M_PI);
    const double phi = uniform(rng, -0.4, 0.4);
    for (int k = 0; k < lesions; ++k) {
      const S kind = k < spec.scar_count ? S::Scar : S::Edema;
      const Vec3 p = midwall_point(c, mid, theta0 + k * step, phi);
      const int lo[3] = {static_cast<int>(std::floor(p[0] - lr)), static_cast<int>(std::floor(p[1] - lr)),
                         static_cast<int>(std::floor(p[2] - lr))};
      const int hi[3] = {static_cast<int>(std::ceil(p[0] + lr)), static_cast<int>(std::ceil(p[1] + lr)),
                         static_cast<int>(std::ceil(p[2] + lr))};
      for (int z = std::max(lo[0], 0); z <= std::min(hi[0], n[0] - 1); ++z)
        for (int y = std::max(lo[1], 0); y <= std::min(hi[1], n[1] - 1); ++y)
          for (int x = std::max(lo[2], 0); x <= std::min(hi[2], n[2] - 1); ++x) {
            const double dz = z - p[0], dy = y - p[1], dx = x - p[2];
            if (dz * dz + dy * dy + dx * dx > lr * lr) continue;
            uint8_t& t = tissue[(static_cast<std::size_t>(z) * n[1] + y) * n[2] + x];
            // Scar takes precedence over edema where blobs overlap.
            if (t == static_cast<uint8_t>(S::Healthy)) t = static_cast<uint8_t>(kind);
          }
    }
    keep_largest(tissue, n, S::Scar, S::Healthy);
    keep_largest(tissue, n, S::Edema, S::Healthy);
    std::size_t scar = 0, edema = 0;
    for (uint8_t t : tissue) {
      scar += t == static_cast<uint8_t>(S::Scar);
      edema += t == static_cast<uint8_t>(S::Edema);
    }
    if ((spec.scar_count > 0 && scar == 0) || (spec.edema_count > 0 && edema == 0)) {
      throw Error("lesions cannot fit in the myocardial shell");
    }
  }
  keep_largest(tissue, n, S::RVBlood, S::Body);

  SubjectSample out;
  out.id = "phantom_" + std::to_string(spec.seed);
  out.group = spec.group;
  out.sequence_mask = sequence_mask(spec.group);
  out.label_mask = label_mask(spec.group);
  const Vec3 sp{h, h, h};
  out.labels = Volume(n, sp, VolumeKind::Labelmap);
  const auto avail = stage2_available(spec.group);
  for (std::size_t v = 0; v < tissue.size(); ++v) {
    TissueClass cls = TissueClass::Background;
    switch (static_cast<S>(tissue[v])) {
      case S::Air:
      case S::Body: cls = TissueClass::Background; break;
      case S::LVBlood: cls = TissueClass::LV; break;
      case S::RVBlood: cls = TissueClass::RV; break;
      case S::Healthy: cls = TissueClass::Healthy; break;
      case S::Scar: cls = TissueClass::Scar; break;
      case S::Edema: cls = TissueClass::Edema; break;
    }
    if (!avail[static_cast<int>(cls)]) cls = cls == TissueClass::Edema ? TissueClass::Healthy : TissueClass::Background;
    out.labels.data[v] = static_cast<float>(schema.code_of(cls));
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  for (int q = 0; q < kSequenceCount; ++q) {
    Volume& img = out.sequences[q];
    img = Volume(n, sp, VolumeKind::Intensity);
    // Draw noise for every sequence so a subject's images do not depend on its group.
    for (std::size_t v = 0; v < tissue.size(); ++v) {
      img.data[v] = static_cast<float>(spec.contrast[q][tissue[v]] + spec.noise_sigma * noise(rng));
    }
    if (!out.sequence_mask[q]) img = missing_sequence_placeholder(img);
  }
  return out;
}

DatasetManifest generate_cohort(const std::array<int, kGroupCount>& n_per_group, const PhantomSpec& templ,
                                const fs::path& out_dir, const LabelSchema& schema) {
  DatasetManifest m;
  m.split = "train";
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create phantom directory " + out_dir.string() + ": " + ec.message());
  for (int g = 0; g < kGroupCount; ++g) {
    if (n_per_group[g] < 0) throw Error("phantom counts must be >= 0");
    for (int k = 0; k < n_per_group[g]; ++k) {
      PhantomSpec spec = templ;
      spec.group = kAllGroups[g];
      spec.seed = templ.seed * 1000 + 100 * static_cast<uint64_t>(g) + static_cast<uint64_t>(k);
      SubjectSample s = generate_phantom(spec, schema);
      char id[32];
      std::snprintf(id, sizeof(id), "phantom_g%d_%02d", g + 1, k);
      s.id = id;
      const fs::path dir = out_dir / s.id;
      fs::create_directories(dir, ec);
      if (ec) throw Error("cannot create phantom directory " + dir.string() + ": " + ec.message());
      SubjectEntry e;
      e.id = s.id;
      e.group = s.group;
      for (int q = 0; q < kSequenceCount; ++q) {
        if (!s.sequence_mask[q]) continue;
        const fs::path p = dir / (std::string(kSequenceFileStems[q]) + ".nii.gz");
        save_volume(s.sequences[q], p);
        e.sequences[q] = p.string();
      }
      const fs::path lp = dir / (std::string(kLabelFileStem) + ".nii.gz");
      save_volume(s.labels, lp);
      e.label = lp.string();
      m.entries.push_back(std::move(e));
    }
  }
  m.validate();
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace mscare
