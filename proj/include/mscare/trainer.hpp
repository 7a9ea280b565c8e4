#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mscare/augmentation.hpp"
#include "mscare/checkpoint.hpp"
#include "mscare/dataset.hpp"
#include "mscare/network.hpp"
#include "mscare/optimizer.hpp"

namespace mscare {

struct LossWeights {
  double lambda1 = 1.0;  // stage-1 terms
  double lambda2 = 1.0;  // stage-2 terms
};

struct TrainingOptions {
  int64_t iterations = 80000;
  AdamConfig adam;
  LossWeights weights;
  double ema_decay = 0.999;
  uint64_t seed = 0;
  int fold = 0;
  int64_t checkpoint_interval = 0;  // 0 writes the final checkpoint only
  std::filesystem::path checkpoint_dir = "checkpoints";
  AugmentationRanges augmentation;
  UNetConfig network;
  LabelSchema schema;
  /// Stop once this many iterations are done, without writing a final
  /// checkpoint (emulates an interrupted run). Negative disables.
  int64_t stop_after = -1;
  std::function<void(int64_t iteration, double loss)> on_iteration;
};

struct TrainState {
  CascadeModel<float> model;
  ParameterSet<float> ema;
  AdamState adam;
  int64_t iteration = 0;
  uint64_t seed = 0;
  int fold = 0;
};

/// He-initialised model, EMA equal to the model, zero Adam moments.
TrainState initial_state(const UNetConfig& cfg, uint64_t seed, int fold);

/// Random stream of one iteration (triplet draw, augmentation, dropout).
/// Depends only on (seed, fold, iteration), so resumed runs replay exactly.
std::mt19937_64 iteration_rng(uint64_t seed, int fold, int64_t iteration);

/// Per-term losses of one objective evaluation, by group.
struct ObjectiveTerms {
  std::array<double, kGroupCount> stage1{0, 0, 0};
  std::array<double, kGroupCount> stage2{0, 0, 0};
};

/// Sum over the items of lambda1 * stage-1 Dice + lambda2 * stage-2 Dice,
/// each masked to the item's available labels. Parameter gradients are
/// accumulated into `grads` when given.
template <typename T>
double cascade_objective(const CascadeModel<T>& model, std::span<const TrainItem> items, const LossWeights& w,
                         bool training, std::mt19937_64* rng, ParameterSet<T>* grads, ObjectiveTerms* terms = nullptr);

/// One optimisation step on a triplet: objective and gradients, one Adam
/// update, EMA update, iteration + 1. Returns the objective before the step.
double training_iteration(TrainState& state, std::span<const TrainItem> items, const TrainingOptions& opt,
                          std::mt19937_64& rng);

Checkpoint make_checkpoint(const TrainState& s, const UNetConfig& cfg, const LabelSchema& schema);
TrainState state_from_checkpoint(const Checkpoint& c);

std::filesystem::path periodic_checkpoint_path(const std::filesystem::path& dir, int fold, int64_t iteration);
std::filesystem::path final_checkpoint_path(const std::filesystem::path& dir, int fold);

struct TrainingResult {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<double> losses;  // one per iteration run
  bool completed = false;
};

/// Runs (or resumes) training up to `opt.iterations`, writing periodic
/// checkpoints and a final one whose EMA weights are the inference weights.
TrainingResult run_training(const TrainingPool& pool, const TrainingOptions& opt,
                            const std::optional<std::filesystem::path>& resume = std::nullopt);

}  // namespace mscare
