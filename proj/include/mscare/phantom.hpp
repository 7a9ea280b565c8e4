#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "mscare/dataset.hpp"

namespace mscare {

/// Structures rendered by the phantom, in contrast-table order.
enum class PhantomStructure { Air = 0, Body, LVBlood, RVBlood, Healthy, Scar, Edema };
constexpr int kPhantomStructures = 7;

/// Mean intensity per structure, one row per sequence (LGE, T2, bSSFP).
using ContrastTable = std::array<std::array<double, kPhantomStructures>, kSequenceCount>;

ContrastTable default_contrast();

struct PhantomSpec {
  Shape3 grid_size{48, 48, 48};
  double spacing = 1.2;           // mm
  double lv_radius = 7.2;         // mm, short-axis radius of the blood pool
  double lv_elongation = 1.4;     // long-axis radius / short-axis radius (long axis = array axis 0)
  double wall_thickness = 4.8;    // mm
  Vec3 rv_offset{0.0, 0.0, 12.0};  // mm, RV centre relative to the LV centre
  double rv_radius = 8.4;         // mm
  int scar_count = 2;
  int edema_count = 1;
  double lesion_radius = 5.4;     // mm
  double noise_sigma = 0.04;
  double center_jitter = 2.0;     // voxels, uniform per axis
  ContrastTable contrast = default_contrast();
  uint64_t seed = 1;
  GroupTag group = GroupTag::G1;

  void validate() const;
  bool operator==(const PhantomSpec&) const = default;
};

/// Renders one subject. Labels are fixed before noise is added. Lesion blobs
/// are chained along the wall so each lesion label forms one region; edema is
/// placed next to the scar. For G2 and G3 the missing sequences become zero
/// placeholders and unavailable labels fold into their parent (edema into
/// healthy tissue, RV into background).
SubjectSample generate_phantom(const PhantomSpec& spec, const LabelSchema& schema = {});

/// Writes n phantoms per group under `out_dir/<id>/` plus `out_dir/manifest.json`.
/// Subject k of group g uses seed template.seed * 1000 + 100 * g + k.
DatasetManifest generate_cohort(const std::array<int, kGroupCount>& n_per_group, const PhantomSpec& templ,
                                const std::filesystem::path& out_dir, const LabelSchema& schema = {});

}  // namespace mscare
