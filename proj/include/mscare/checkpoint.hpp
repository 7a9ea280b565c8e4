#pragma once

#include <cstdint>
#include <filesystem>

#include "mscare/labels.hpp"
#include "mscare/network.hpp"
#include "mscare/optimizer.hpp"

namespace mscare {

constexpr uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training or to run inference.
struct Checkpoint {
  UNetConfig config;
  LabelSchema schema;
  int64_t iteration = 0;
  uint64_t seed = 0;
  int fold = 0;
  ParameterSet<float> model;
  ParameterSet<float> ema;
  AdamState adam;

  bool operator==(const Checkpoint&) const = default;
};

/// Binary container: magic "MSCARECK", u32 version, u64 header length, a JSON
/// header (configuration, schema, counters and a table of named tensors with
/// byte offsets), then raw little-endian float32 tensor data. Written to a
/// temporary file and renamed into place.
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model (or EMA) weights of a checkpoint as a cascade.
CascadeModel<float> checkpoint_model(const Checkpoint& c, bool use_ema);

}  // namespace mscare
