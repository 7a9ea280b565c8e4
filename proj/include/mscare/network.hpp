#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "mscare/graph.hpp"
#include "mscare/labels.hpp"

namespace mscare {

/// Architecture of one cascade stage (a 3D U-Net with extra convolutions
/// before and after it).
struct UNetConfig {
  int levels = 5;
  int convs_per_level = 2;
  int filters = 64;
  int kernel = 3;
  double dropout_rate = 0.1;
  double leaky_slope = 0.1;
  int pre_convs = 2;
  int post_convs = 3;

  void validate() const;
  /// Spatial sizes must be divisible by this factor.
  int size_divisor() const { return 1 << (levels - 1); }
  bool operator==(const UNetConfig&) const = default;
};

/// Parameter references of one stage. Heads are per group, 1x1x1, with one
/// output channel per label available to that group.
struct StageLayout {
  int stage = 1;
  int in_channels = 0;
  std::vector<ConvRef> pre;
  std::vector<std::vector<ConvRef>> down;  // levels entries
  std::vector<std::vector<ConvRef>> up;    // levels - 1 entries, index = level
  std::vector<ConvRef> post;
  std::array<ConvRef, kGroupCount> heads;
};

/// Adds the parameters of one stage to `params` (zero-filled) under `prefix`.
/// `head_channels[g]` is the output width of group g's head.
StageLayout add_stage(ParameterSet<float>& params, const std::string& prefix, const UNetConfig& cfg, int stage,
                      int in_channels, const std::array<int, kGroupCount>& head_channels);

constexpr int kImageChannels = kSequenceCount;
/// Stage-2 input: stage-1 logits scattered to the full anatomy class list, then the image.
constexpr int kStage2InputChannels = kStage1Classes + kImageChannels;

/// Both stages of the cascade. Stage weights are separate parameter entries.
template <typename T>
struct CascadeModel {
  UNetConfig config;
  ParameterSet<T> params;
  StageLayout stage1;
  StageLayout stage2;

  const StageLayout& stage(int s) const { return s == 1 ? stage1 : stage2; }

  template <typename U>
  CascadeModel<U> cast() const {
    return CascadeModel<U>{config, params.template cast<U>(), stage1, stage2};
  }
};

/// Layout with all parameters zero.
CascadeModel<float> build_cascade(const UNetConfig& cfg);

/// He-normal convolution kernels (variance 2 / fan_in), zero biases.
CascadeModel<float> init_weights(const UNetConfig& cfg, std::mt19937_64& rng);

/// Pre-activation network output for one (stage, group) head.
template <typename T>
struct LogitVolume {
  Tensor<T> data;
  int stage = 1;
  GroupTag group = GroupTag::G1;
};

/// Records one stage on `g` and returns the head output node. Dropout is
/// active only when `training` is set (it then needs `rng`).
template <typename T>
int record_stage(Graph<T>& g, const StageLayout& s, const UNetConfig& cfg, int x, GroupTag group, bool training,
                 std::mt19937_64* rng);

struct CascadeNodes {
  int stage1 = -1;
  int stage2 = -1;
};

/// Records the full cascade: stage 2 sees the stage-1 logits (scattered to
/// the full anatomy class list) concatenated with the image channels.
template <typename T>
CascadeNodes record_cascade(Graph<T>& g, const CascadeModel<T>& m, int x, GroupTag group, bool training,
                            std::mt19937_64* rng);

/// One stage applied to `x` without recording gradients.
template <typename T>
LogitVolume<T> stage_forward(const ParameterSet<T>& params, const StageLayout& s, const UNetConfig& cfg,
                             const Tensor<T>& x, GroupTag group, bool training, std::mt19937_64* rng = nullptr);

template <typename T>
std::pair<LogitVolume<T>, LogitVolume<T>> cascade_forward(const CascadeModel<T>& m, const Tensor<T>& x, GroupTag group,
                                                          bool training, std::mt19937_64* rng = nullptr);

template <typename T>
Tensor<T> softmax_labels(const LogitVolume<T>& l);

}  // namespace mscare
