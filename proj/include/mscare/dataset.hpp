#pragma once

#include <array>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mscare/augmentation.hpp"
#include "mscare/labels.hpp"
#include "mscare/tensor.hpp"
#include "mscare/volume.hpp"

namespace mscare {

/// One subject on disk. Empty sequence paths mark missing sequences; an empty
/// label path marks an unlabelled (test) subject.
struct SubjectEntry {
  std::string id;
  GroupTag group = GroupTag::G1;
  std::array<std::string, kSequenceCount> sequences;
  std::string label;

  bool operator==(const SubjectEntry&) const = default;
};

struct DatasetManifest {
  std::string split = "train";  // train, validation or test
  std::vector<SubjectEntry> entries;

  /// Throws on duplicate ids or entries inconsistent with their group.
  void validate() const;
  /// Indices of the entries of one group, in manifest order.
  std::vector<int> group_members(GroupTag g) const;
  const SubjectEntry& find(const std::string& id) const;

  bool operator==(const DatasetManifest&) const = default;
};

/// File names recognised inside a subject directory (with .nii or .nii.gz).
constexpr std::array<const char*, kSequenceCount> kSequenceFileStems = {"lge", "t2", "bssfp"};
constexpr const char* kLabelFileStem = "label";

/// Scans `dir/<subject_id>/` directories and infers each subject's group from
/// the sequence files present. Subjects without a label file are kept only
/// when `require_labels` is false.
DatasetManifest build_manifest(const std::filesystem::path& dir, const std::string& split, bool require_labels);

/// Restricts a manifest to (keep = true) or away from (keep = false) the listed ids.
DatasetManifest select_subjects(const DatasetManifest& m, const std::vector<std::string>& ids, bool keep);

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Aligned volumes of one subject. Missing sequences hold zero placeholders.
struct SubjectSample {
  std::string id;
  GroupTag group = GroupTag::G1;
  std::array<Volume, kSequenceCount> sequences;
  Volume labels;  // voxel codes; empty when unlabelled
  SequenceMask sequence_mask{false, false, false};
  LabelMask label_mask{false, false, false, false, false};
  std::array<float, kSequenceCount> pad_values{0, 0, 0};  // background level per sequence

  bool has_labels() const { return !labels.data.empty(); }
  const Volume& reference() const { return sequences[0]; }
};

/// Reads a subject's volumes and checks they share one grid and that label
/// codes belong to the schema and to the subject's group.
SubjectSample load_subject(const SubjectEntry& e, const LabelSchema& schema);

enum class RoiCentering { LabelBox, ScanCenter };

struct PreprocessOptions {
  double spacing = 1.2;
  Shape3 roi{128, 128, 128};
  RoiCentering centering = RoiCentering::LabelBox;
};

/// Resample to isotropic spacing, normalise the available sequences and cut
/// the ROI (intensity padding with the normalised minimum, labels with 0).
SubjectSample preprocess_subject(const SubjectSample& raw, const PreprocessOptions& opt);

/// Per-voxel stage-2 class indices (TissueClass) of a code labelmap.
std::vector<uint8_t> tissue_classes(const Volume& labels, const LabelSchema& schema);

/// Stage-1 ground truth as class indices (AnatomyClass): healthy, scar and
/// edema all map to the myocardium.
Volume stage1_groundtruth(const SubjectSample& s, const LabelSchema& schema);

/// The three sequences as a (3, D, H, W) tensor.
Tensor<float> image_tensor(const SubjectSample& s);

/// A subject ready for a training step.
struct TrainItem {
  GroupTag group = GroupTag::G1;
  Tensor<float> image;
  std::vector<uint8_t> tissue;  // TissueClass per voxel
};

TrainItem make_train_item(const SubjectSample& s, const LabelSchema& schema);

/// One subject index per group, drawn uniformly.
std::array<int, kGroupCount> draw_triplet_indices(const std::array<int, kGroupCount>& group_sizes,
                                                 std::mt19937_64& rng);

/// Preprocessed training subjects bucketed by group.
struct TrainingPool {
  std::array<std::vector<SubjectSample>, kGroupCount> groups;

  void add(SubjectSample s) { groups[static_cast<int>(s.group)].push_back(std::move(s)); }
  std::array<int, kGroupCount> sizes() const;
};

/// Applies one shared spatial transform to every volume of a subject and
/// intensity augmentation to its available sequences.
SubjectSample augment_subject(const SubjectSample& s, const AugmentationRanges& r, std::mt19937_64& rng);

/// Draws one subject per group and augments each (when enabled).
std::array<SubjectSample, kGroupCount> sample_training_triplet(const TrainingPool& pool, const AugmentationRanges& r,
                                                              std::mt19937_64& rng);

}  // namespace mscare
