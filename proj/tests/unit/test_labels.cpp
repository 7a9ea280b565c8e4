#include <doctest.h>

#include "mscare/labels.hpp"

using namespace mscare;

TEST_CASE("group availability tables") {
  CHECK(sequence_mask(GroupTag::G1) == SequenceMask{true, true, true});
  CHECK(sequence_mask(GroupTag::G2) == SequenceMask{true, false, true});
  CHECK(sequence_mask(GroupTag::G3) == SequenceMask{true, false, false});
  // LV, RV, MYO, scar, edema
  CHECK(label_mask(GroupTag::G1) == LabelMask{true, true, true, true, true});
  CHECK(label_mask(GroupTag::G2) == LabelMask{true, true, true, true, false});
  CHECK(label_mask(GroupTag::G3) == LabelMask{true, false, true, true, false});
}

TEST_CASE("group inference is a function of the sequence pattern") {
  for (int bits = 0; bits < 8; ++bits) {
    const SequenceMask m{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0};
    const auto g = group_for_sequences(m);
    int matches = 0;
    for (GroupTag t : kAllGroups) matches += sequence_mask(t) == m;
    CHECK(g.has_value() == (matches == 1));
    if (g) CHECK(sequence_mask(*g) == m);
  }
  CHECK_FALSE(group_for_sequences({false, true, false}).has_value());  // T2 only
}

TEST_CASE("head channel layouts") {
  CHECK(stage1_channels(GroupTag::G1).size() == 4);
  CHECK(stage1_channels(GroupTag::G2).size() == 4);
  CHECK(stage1_channels(GroupTag::G3).size() == 3);
  CHECK(stage2_channels(GroupTag::G1).size() == 6);
  CHECK(stage2_channels(GroupTag::G2).size() == 5);
  CHECK(stage2_channels(GroupTag::G3).size() == 4);
  for (GroupTag g : kAllGroups) {
    CHECK(stage1_channels(g).front() == AnatomyClass::Background);
    CHECK(stage2_channels(g).front() == TissueClass::Background);
    // Stage-2 availability agrees with the label mask.
    const auto a = stage2_available(g);
    const auto m = label_mask(g);
    CHECK(a[static_cast<int>(TissueClass::LV)] == m[0]);
    CHECK(a[static_cast<int>(TissueClass::RV)] == m[1]);
    CHECK(a[static_cast<int>(TissueClass::Scar)] == m[3]);
    CHECK(a[static_cast<int>(TissueClass::Edema)] == m[4]);
    CHECK(stage1_available(g)[static_cast<int>(AnatomyClass::RV)] == m[1]);
  }
}

TEST_CASE("anatomy of tissue classes") {
  CHECK(anatomy_of(TissueClass::Scar) == AnatomyClass::Myo);
  CHECK(anatomy_of(TissueClass::Edema) == AnatomyClass::Myo);
  CHECK(anatomy_of(TissueClass::Healthy) == AnatomyClass::Myo);
  CHECK(anatomy_of(TissueClass::Background) == AnatomyClass::Background);
  CHECK(anatomy_of(TissueClass::RV) == AnatomyClass::RV);
}

TEST_CASE("label schema") {
  LabelSchema s;
  CHECK_NOTHROW(s.validate());
  CHECK(s.tissue_of(4) == TissueClass::Scar);
  CHECK_THROWS_AS(s.tissue_of(9), Error);
  s.codes = {0, 500, 600, 200, 1220, 2221};
  CHECK(s.tissue_of(1220) == TissueClass::Scar);
  CHECK(s.code_of(TissueClass::Edema) == 2221);
  s.codes[2] = 500;
  CHECK_THROWS_AS(s.validate(), Error);
  s.codes[2] = -1;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("group names") {
  CHECK(parse_group("G2") == GroupTag::G2);
  CHECK(to_string(GroupTag::G3) == "G3");
  CHECK_THROWS_AS(parse_group("G4"), Error);
}
