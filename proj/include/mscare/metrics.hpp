#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mscare/labels.hpp"
#include "mscare/volume.hpp"

namespace mscare {

struct ConfusionCounts {
  uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Voxelwise counts of two binary masks (non-zero = foreground).
ConfusionCounts confusion(std::span<const uint8_t> pred, std::span<const uint8_t> gt);

/// Percentages. A 0/0 ratio gives 0, except DSC, SEN and PRE give 100 when
/// both masks are empty; SPE gives 100 when there is no background.
struct MetricValues {
  double dsc = 0, sen = 0, spe = 0, pre = 0;
};

MetricValues metrics_from_counts(const ConfusionCounts& c);

/// An evaluated structure: a display name and the classes it unites.
struct EvalLabel {
  std::string name;
  std::vector<TissueClass> classes;
};

/// Parses names such as "Scar", "LV", "MYO" or "Scar&Edema" (case-insensitive;
/// parts joined with '&' or '+'). MYO unites healthy tissue, scar and edema.
EvalLabel parse_eval_label(const std::string& name);

/// Union mask of the classes' codes in a code labelmap.
std::vector<uint8_t> combined_label_mask(const Volume& lm, const std::vector<TissueClass>& classes,
                                         const LabelSchema& schema);

struct ReportRow {
  std::string subject_id;
  std::string label;
  MetricValues values;
};

struct EvaluationReport {
  std::vector<ReportRow> rows;   // per subject and label
  std::vector<ReportRow> means;  // subject_id "mean", one per label
  std::string ensemble_note;     // free text, e.g. checkpoint list

  std::string to_csv() const;
  std::string to_table() const;
};

/// Metrics of one subject's prediction and ground truth (code labelmaps).
std::vector<ReportRow> evaluate_subject(const std::string& id, const Volume& pred, const Volume& gt,
                                        const std::vector<EvalLabel>& labels, const LabelSchema& schema);

/// Matches `<id>[_pred|_gt|_label].nii[.gz]` files or `<id>/label.nii[.gz]`
/// directories in both trees by subject id and evaluates every pair. Any
/// subject present on one side only is an error listing the ids.
EvaluationReport evaluate_split(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                const std::vector<EvalLabel>& labels, const LabelSchema& schema);

}  // namespace mscare
