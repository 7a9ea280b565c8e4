#include "mscare/trainer.hpp"

#include <cmath>
#include <sstream>

#include "mscare/loss.hpp"

namespace mscare {

namespace fs = std::filesystem;

TrainState initial_state(const UNetConfig& cfg, uint64_t seed, int fold) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(fold)};
  std::mt19937_64 rng(seq);
  TrainState s;
  s.model = init_weights(cfg, rng);
  s.ema = s.model.params;
  s.adam = AdamState::like(s.model.params);
  s.seed = seed;
  s.fold = fold;
  return s;
}

std::mt19937_64 iteration_rng(uint64_t seed, int fold, int64_t iteration) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(fold),
                    static_cast<uint32_t>(iteration), static_cast<uint32_t>(static_cast<uint64_t>(iteration) >> 32),
                    0x17u};
  return std::mt19937_64(seq);
}

template <typename T>
double cascade_objective(const CascadeModel<T>& model, std::span<const TrainItem> items, const LossWeights& w,
                         bool training, std::mt19937_64* rng, ParameterSet<T>* grads, ObjectiveTerms* terms) {
  double total = 0.0;
  for (const TrainItem& item : items) {
    const GroupTag g = item.group;
    const int gi = static_cast<int>(g);
    const Shape3 sp = item.image.spatial();
    Graph<T> graph(model.params, grads != nullptr);
    const int x = graph.input(item.image.template cast<T>());
    const CascadeNodes n = record_cascade(graph, model, x, g, training, rng);

    std::vector<uint8_t> anatomy(item.tissue.size());
    for (std::size_t i = 0; i < anatomy.size(); ++i) {
      anatomy[i] = static_cast<uint8_t>(anatomy_of(static_cast<TissueClass>(item.tissue[i])));
    }
    const Tensor<T> gt1 = one_hot<T>(anatomy, sp, kStage1Classes);
    const Tensor<T> gt2 = one_hot<T>(item.tissue, sp, kStage2Classes);
    std::vector<int> map1, map2;
    for (AnatomyClass c : stage1_channels(g)) map1.push_back(static_cast<int>(c));
    for (TissueClass c : stage2_channels(g)) map2.push_back(static_cast<int>(c));
    const auto a1 = stage1_available(g);
    const auto a2 = stage2_available(g);
    const std::vector<bool> avail1(a1.begin(), a1.end());
    const std::vector<bool> avail2(a2.begin(), a2.end());

    Tensor<T> d1, d2;
    const double l1 = head_dice_term(graph.value(n.stage1), map1, gt1, avail1, grads ? &d1 : nullptr);
    const double l2 = head_dice_term(graph.value(n.stage2), map2, gt2, avail2, grads ? &d2 : nullptr);
    if (terms) {
      terms->stage1[gi] = l1;
      terms->stage2[gi] = l2;
    }
    total += w.lambda1 * l1 + w.lambda2 * l2;
    if (grads) {
      for (T& v : d1.data) v *= static_cast<T>(w.lambda1);
      for (T& v : d2.data) v *= static_cast<T>(w.lambda2);
      std::vector<std::pair<int, Tensor<T>>> seeds;
      seeds.emplace_back(n.stage1, std::move(d1));
      seeds.emplace_back(n.stage2, std::move(d2));
      graph.backward(std::move(seeds), *grads);
    }
  }
  return total;
}

template double cascade_objective(const CascadeModel<float>&, std::span<const TrainItem>, const LossWeights&, bool,
                                  std::mt19937_64*, ParameterSet<float>*, ObjectiveTerms*);
template double cascade_objective(const CascadeModel<double>&, std::span<const TrainItem>, const LossWeights&, bool,
                                  std::mt19937_64*, ParameterSet<double>*, ObjectiveTerms*);

double training_iteration(TrainState& state, std::span<const TrainItem> items, const TrainingOptions& opt,
                          std::mt19937_64& rng) {
  ParameterSet<float> grads = state.model.params.zeros_like();
  ObjectiveTerms terms;
  const double loss = cascade_objective(state.model, items, opt.weights, true, &rng, &grads, &terms);
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite training loss at iteration " << state.iteration << " (stage-1 terms";
    for (double t : terms.stage1) msg << " " << t;
    msg << "; stage-2 terms";
    for (double t : terms.stage2) msg << " " << t;
    msg << ")";
    throw Error(msg.str());
  }
  adam_step(state.model.params, grads, state.adam, opt.adam);
  ema_update(state.ema, state.model.params, opt.ema_decay);
  ++state.iteration;
  return loss;
}

Checkpoint make_checkpoint(const TrainState& s, const UNetConfig& cfg, const LabelSchema& schema) {
  Checkpoint c;
  c.config = cfg;
  c.schema = schema;
  c.iteration = s.iteration;
  c.seed = s.seed;
  c.fold = s.fold;
  c.model = s.model.params;
  c.ema = s.ema;
  c.adam = s.adam;
  return c;
}

TrainState state_from_checkpoint(const Checkpoint& c) {
  TrainState s;
  s.model = checkpoint_model(c, false);
  s.ema = c.ema;
  s.adam = c.adam;
  s.iteration = c.iteration;
  s.seed = c.seed;
  s.fold = c.fold;
  return s;
}

fs::path periodic_checkpoint_path(const fs::path& dir, int fold, int64_t iteration) {
  return dir / ("fold" + std::to_string(fold) + "_iter" + std::to_string(iteration) + ".ckpt");
}

fs::path final_checkpoint_path(const fs::path& dir, int fold) {
  return dir / ("fold" + std::to_string(fold) + "_final.ckpt");
}

TrainingResult run_training(const TrainingPool& pool, const TrainingOptions& opt,
                            const std::optional<fs::path>& resume) {
  const FlushSubnormals ftz;
  opt.network.validate();
  opt.augmentation.validate();
  if (opt.iterations < 0) throw Error("training.iterations must be >= 0");
  if (!(opt.ema_decay >= 0.0 && opt.ema_decay < 1.0)) throw Error("training.ema_decay must lie in [0, 1)");
  const auto sizes = pool.sizes();
  for (int g = 0; g < kGroupCount; ++g) {
    if (sizes[g] == 0) throw Error("training set has no subject in group " + std::string(to_string(kAllGroups[g])));
  }

  TrainState state;
  if (resume) {
    const Checkpoint c = load_checkpoint(*resume);
    if (!(c.config == opt.network)) throw Error("resume checkpoint network differs from the configuration: " + resume->string());
    if (c.seed != opt.seed || c.fold != opt.fold) {
      throw Error("resume checkpoint seed/fold differ from the configuration: " + resume->string());
    }
    if (!(c.schema == opt.schema)) throw Error("resume checkpoint label schema differs: " + resume->string());
    state = state_from_checkpoint(c);
  } else {
    state = initial_state(opt.network, opt.seed, opt.fold);
  }

  TrainingResult res;
  while (state.iteration < opt.iterations) {
    if (opt.stop_after >= 0 && state.iteration >= opt.stop_after) return res;
    std::mt19937_64 rng = iteration_rng(opt.seed, opt.fold, state.iteration);
    const auto triplet = sample_training_triplet(pool, opt.augmentation, rng);
    std::vector<TrainItem> items;
    for (const SubjectSample& s : triplet) items.push_back(make_train_item(s, opt.schema));
    const double loss = training_iteration(state, items, opt, rng);
    res.losses.push_back(loss);
    if (opt.on_iteration) opt.on_iteration(state.iteration, loss);
    if (opt.checkpoint_interval > 0 && state.iteration % opt.checkpoint_interval == 0) {
      const fs::path p = periodic_checkpoint_path(opt.checkpoint_dir, opt.fold, state.iteration);
      save_checkpoint(make_checkpoint(state, opt.network, opt.schema), p);
      res.checkpoints.push_back(p);
    }
  }
  const fs::path p = final_checkpoint_path(opt.checkpoint_dir, opt.fold);
  save_checkpoint(make_checkpoint(state, opt.network, opt.schema), p);
  res.checkpoints.push_back(p);
  res.completed = true;
  return res;
}

}  // namespace mscare
