#include "mscare/labels.hpp"

#include <algorithm>

namespace mscare {

std::string_view to_string(Sequence s) {
  switch (s) {
    case Sequence::LGE: return "lge";
    case Sequence::T2: return "t2";
    case Sequence::BSSFP: return "bssfp";
  }
  return "?";
}

std::string_view to_string(GroupTag g) {
  switch (g) {
    case GroupTag::G1: return "G1";
    case GroupTag::G2: return "G2";
    case GroupTag::G3: return "G3";
  }
  return "?";
}

std::string_view to_string(TissueClass c) {
  switch (c) {
    case TissueClass::Background: return "background";
    case TissueClass::LV: return "LV";
    case TissueClass::RV: return "RV";
    case TissueClass::Healthy: return "healthy";
    case TissueClass::Scar: return "scar";
    case TissueClass::Edema: return "edema";
  }
  return "?";
}

std::string_view to_string(AnatomyClass c) {
  switch (c) {
    case AnatomyClass::Background: return "background";
    case AnatomyClass::LV: return "LV";
    case AnatomyClass::RV: return "RV";
    case AnatomyClass::Myo: return "MYO";
  }
  return "?";
}

GroupTag parse_group(std::string_view name) {
  for (GroupTag g : kAllGroups) {
    if (to_string(g) == name) return g;
  }
  throw Error("unknown group tag '" + std::string(name) + "'");
}

SequenceMask sequence_mask(GroupTag g) {
  switch (g) {
    case GroupTag::G1: return {true, true, true};
    case GroupTag::G2: return {true, false, true};
    case GroupTag::G3: return {true, false, false};
  }
  return {};
}

LabelMask label_mask(GroupTag g) {
  switch (g) {
    case GroupTag::G1: return {true, true, true, true, true};
    case GroupTag::G2: return {true, true, true, true, false};
    case GroupTag::G3: return {true, false, true, true, false};
  }
  return {};
}

std::optional<GroupTag> group_for_sequences(const SequenceMask& present) {
  for (GroupTag g : kAllGroups) {
    if (sequence_mask(g) == present) return g;
  }
  return std::nullopt;
}

std::vector<AnatomyClass> stage1_channels(GroupTag g) {
  if (g == GroupTag::G3) return {AnatomyClass::Background, AnatomyClass::LV, AnatomyClass::Myo};
  return {AnatomyClass::Background, AnatomyClass::LV, AnatomyClass::RV, AnatomyClass::Myo};
}

std::vector<TissueClass> stage2_channels(GroupTag g) {
  using T = TissueClass;
  switch (g) {
    case GroupTag::G1: return {T::Background, T::LV, T::RV, T::Healthy, T::Scar, T::Edema};
    case GroupTag::G2: return {T::Background, T::LV, T::RV, T::Healthy, T::Scar};
    case GroupTag::G3: return {T::Background, T::LV, T::Healthy, T::Scar};
  }
  return {};
}

std::array<bool, kStage1Classes> stage1_available(GroupTag g) {
  std::array<bool, kStage1Classes> a{};
  for (AnatomyClass c : stage1_channels(g)) a[static_cast<int>(c)] = true;
  return a;
}

std::array<bool, kStage2Classes> stage2_available(GroupTag g) {
  std::array<bool, kStage2Classes> a{};
  for (TissueClass c : stage2_channels(g)) a[static_cast<int>(c)] = true;
  return a;
}

AnatomyClass anatomy_of(TissueClass c) {
  switch (c) {
    case TissueClass::Background: return AnatomyClass::Background;
    case TissueClass::LV: return AnatomyClass::LV;
    case TissueClass::RV: return AnatomyClass::RV;
    case TissueClass::Healthy:
    case TissueClass::Scar:
    case TissueClass::Edema: return AnatomyClass::Myo;
  }
  return AnatomyClass::Background;
}

void LabelSchema::validate() const {
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < 0) throw Error("label codes must be non-negative");
    for (std::size_t j = i + 1; j < codes.size(); ++j) {
      if (codes[i] == codes[j]) throw Error("label codes must be unique (code " + std::to_string(codes[i]) + " repeats)");
    }
  }
}

TissueClass LabelSchema::tissue_of(int code) const {
  auto it = std::find(codes.begin(), codes.end(), code);
  if (it == codes.end()) throw Error("voxel code " + std::to_string(code) + " is not in the label schema");
  return static_cast<TissueClass>(it - codes.begin());
}

}  // namespace mscare
