#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mscare/common.hpp"

namespace mscare {

enum class Sequence { LGE = 0, T2 = 1, BSSFP = 2 };
constexpr int kSequenceCount = 3;
constexpr std::array<Sequence, kSequenceCount> kAllSequences = {Sequence::LGE, Sequence::T2, Sequence::BSSFP};

/// Stage-1 (anatomy) classes.
enum class AnatomyClass { Background = 0, LV = 1, RV = 2, Myo = 3 };
constexpr int kStage1Classes = 4;

/// Stage-2 (viability-resolved) classes.
enum class TissueClass { Background = 0, LV = 1, RV = 2, Healthy = 3, Scar = 4, Edema = 5 };
constexpr int kStage2Classes = 6;

/// Availability group, decided by which sequences a subject has.
enum class GroupTag { G1 = 0, G2 = 1, G3 = 2 };
constexpr int kGroupCount = 3;
constexpr std::array<GroupTag, kGroupCount> kAllGroups = {GroupTag::G1, GroupTag::G2, GroupTag::G3};

using SequenceMask = std::array<bool, kSequenceCount>;
/// Label availability in the order LV, RV, MYO, scar, edema.
using LabelMask = std::array<bool, 5>;

std::string_view to_string(Sequence s);
std::string_view to_string(GroupTag g);
std::string_view to_string(TissueClass c);
std::string_view to_string(AnatomyClass c);
GroupTag parse_group(std::string_view name);

SequenceMask sequence_mask(GroupTag g);
LabelMask label_mask(GroupTag g);

/// Group for a sequence-availability pattern, or nullopt for a pattern outside the three groups.
std::optional<GroupTag> group_for_sequences(const SequenceMask& present);

/// Head channel layouts: which classes each (stage, group) head predicts, background first.
std::vector<AnatomyClass> stage1_channels(GroupTag g);
std::vector<TissueClass> stage2_channels(GroupTag g);

/// Per-class availability over the full class lists, background always true.
std::array<bool, kStage1Classes> stage1_available(GroupTag g);
std::array<bool, kStage2Classes> stage2_available(GroupTag g);

AnatomyClass anatomy_of(TissueClass c);

/// Integer voxel codes of the stage-2 classes in label files.
struct LabelSchema {
  std::array<int, kStage2Classes> codes{0, 1, 2, 3, 4, 5};

  /// Throws on codes that are negative or not unique.
  void validate() const;
  /// Class for a voxel code; throws on unknown codes.
  TissueClass tissue_of(int code) const;
  int code_of(TissueClass c) const { return codes[static_cast<int>(c)]; }

  bool operator==(const LabelSchema&) const = default;
};

}  // namespace mscare
