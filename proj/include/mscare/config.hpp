#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mscare/augmentation.hpp"
#include "mscare/labels.hpp"
#include "mscare/network.hpp"
#include "mscare/phantom.hpp"

namespace mscare {

struct DataConfig {
  std::string root = "data";
  std::string train_dir = "train";
  std::string validation_dir = "validation";
  std::string test_dir = "test";
  bool operator==(const DataConfig&) const = default;
};

struct PreprocessConfig {
  double spacing = 1.2;
  bool operator==(const PreprocessConfig&) const = default;
};

struct TrainingConfig {
  int64_t iterations = 80000;
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double ema_decay = 0.999;
  Shape3 roi_size{128, 128, 128};
  int64_t seed = 0;
  int64_t checkpoint_interval = 5000;
  std::string checkpoint_dir = "checkpoints";
  int fold_id = 0;
  bool operator==(const TrainingConfig&) const = default;
};

struct InferenceConfig {
  std::vector<std::string> checkpoints;
  bool use_ema = true;
  Shape3 roi_size{192, 192, 192};
  int connectivity = 26;
  std::string output_dir = "predictions";
  bool operator==(const InferenceConfig&) const = default;
};

struct EvaluationConfig {
  std::vector<std::string> labels{"Scar", "Scar&Edema"};
  bool operator==(const EvaluationConfig&) const = default;
};

struct PhantomConfig {
  PhantomSpec spec;
  std::array<int, kGroupCount> counts{3, 3, 3};
  std::string output_dir = "phantoms";
  bool operator==(const PhantomConfig&) const = default;
};

/// Every tunable of a run. Defaults are the published settings where one exists.
struct RunConfig {
  DataConfig data;
  LabelSchema labels;
  PreprocessConfig preprocess;
  AugmentationRanges augmentation;
  UNetConfig network;
  TrainingConfig training;
  std::map<int, std::vector<std::string>> folds;  // fold id -> held-out subject ids
  InferenceConfig inference;
  EvaluationConfig evaluation;
  PhantomConfig phantom;

  /// Range checks; messages name the offending key.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Parses a TOML run configuration. Unknown sections or keys are errors.
/// `source` names the input in messages, which carry line numbers.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");

/// Reads and validates a configuration file, then applies the environment
/// overrides MSCARE_DATA_ROOT (data.root) and MSCARE_CHECKPOINT_DIR
/// (training.checkpoint_dir).
RunConfig load_config(const std::filesystem::path& path, bool apply_environment = true);

/// Fully resolved configuration in the same format; parse_config(dump_config(c)) == c.
std::string dump_config(const RunConfig& c);

}  // namespace mscare
