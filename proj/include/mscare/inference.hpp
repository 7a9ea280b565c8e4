#pragma once

#include <filesystem>
#include <vector>

#include "mscare/checkpoint.hpp"
#include "mscare/dataset.hpp"
#include "mscare/network.hpp"

namespace mscare {

struct EnsembleSpec {
  std::vector<std::filesystem::path> checkpoint_paths;
  bool use_ema = true;
};

/// Loaded ensemble members; all share one network configuration and label schema.
struct Ensemble {
  UNetConfig config;
  LabelSchema schema;
  std::vector<CascadeModel<float>> members;
};

Ensemble load_ensemble(const EnsembleSpec& spec);

/// Voxelwise arithmetic mean of equally shaped probability tensors.
Tensor<float> average_probabilities(const std::vector<Tensor<float>>& probs);

/// Per-voxel index of the largest channel; ties go to the lowest index.
std::vector<uint8_t> argmax_channels(const Tensor<float>& prob);

/// Labelmaps hold class indices (AnatomyClass for stage 1, TissueClass for
/// stage 2) on the grid of the input sample.
struct Prediction {
  GroupTag group = GroupTag::G1;
  Volume stage1;
  Volume stage2;
  Tensor<float> stage2_prob;  // one channel per stage-2 head channel of the group
};

/// Mean of the members' softmax outputs (dropout off), then argmax.
Prediction predict_subject(const Ensemble& e, const SubjectSample& sample);

/// Two passes: keep the largest connected component of each foreground
/// label, then the largest component of all remaining foreground. Equal-size
/// components are resolved in favour of the one reached first in raster order.
/// `connectivity` is 6, 18 or 26.
Volume largest_component_filter(const Volume& lm, int connectivity = 26);

/// Nearest-neighbour transfer of a labelmap onto the reference grid via world
/// coordinates; reference voxels outside the labelmap become 0.
Volume map_to_reference(const Volume& lm, const Volume& reference);

/// Class indices to file codes.
Volume classes_to_codes(const Volume& lm, const LabelSchema& schema);

/// Map to the reference grid, apply the label codes and write the file.
/// Returns the written volume.
Volume export_prediction(const Volume& lm, const Volume& reference, const LabelSchema& schema,
                         const std::filesystem::path& path);

}  // namespace mscare
