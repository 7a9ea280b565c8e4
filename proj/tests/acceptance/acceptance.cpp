// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>

#include "component_oracle.hpp"
#include "gradient_check.hpp"
#include "mscare/checkpoint.hpp"
#include "mscare/inference.hpp"
#include "mscare/loss.hpp"
#include "mscare/metrics.hpp"
#include "mscare/nifti.hpp"
#include "mscare/optimizer.hpp"
#include "mscare/phantom.hpp"
#include "mscare/trainer.hpp"
#include "test_support.hpp"

using namespace mscare;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---- 1: gradients ------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  const test::GradientCheck c = test::check_gradients({8, 8, 8}, false, 200, 2024);
  const double secs = seconds_since(t0);
  const bool ok = c.worst < 1e-4 && c.checked >= 200 && c.skipped <= c.checked / 5 && secs < 120.0;
  return {ok, fmt("max rel err %.2e over %d parameters (%d kink coordinates skipped), %.1f s", c.worst, c.checked,
                  c.skipped, secs)};
}

// ---- 2, 3: loss -------------------------------------------------------------

Tensor<double> random_prob(int c, Shape3 s, std::mt19937_64& rng) {
  Tensor<double> t = test::random_tensor<double>({c, s[0], s[1], s[2]}, rng, 0.01, 1.0);
  for (std::size_t i = 0; i < t.channel_size(); ++i) {
    double sum = 0;
    for (int k = 0; k < c; ++k) sum += t.channel(k)[i];
    for (int k = 0; k < c; ++k) t.channel(k)[i] /= sum;
  }
  return t;
}

Tensor<double> random_onehot(int c, Shape3 s, std::mt19937_64& rng) {
  Tensor<double> t(c, s);
  for (std::size_t i = 0; i < t.channel_size(); ++i) t.channel(static_cast<int>(rng() % c))[i] = 1.0;
  return t;
}

Outcome loss_mask_equivalence() {
  std::mt19937_64 rng(101);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 2 + static_cast<int>(rng() % 5);
    const Shape3 s{1 + static_cast<int>(rng() % 4), 1 + static_cast<int>(rng() % 4), 1 + static_cast<int>(rng() % 4)};
    const Tensor<double> gt = random_onehot(c, s, rng);
    const Tensor<double> prob = random_prob(c, s, rng);
    std::vector<bool> mask(c);
    mask[rng() % c] = true;
    for (int k = 0; k < c; ++k) mask[k] = mask[k] || rng() % 2;
    std::vector<int> keep;
    for (int k = 0; k < c; ++k)
      if (mask[k]) keep.push_back(k);
    Tensor<double> gr(static_cast<int>(keep.size()), s), pr(static_cast<int>(keep.size()), s);
    for (std::size_t j = 0; j < keep.size(); ++j) {
      std::copy_n(gt.channel(keep[j]), gt.channel_size(), gr.channel(static_cast<int>(j)));
      std::copy_n(prob.channel(keep[j]), prob.channel_size(), pr.channel(static_cast<int>(j)));
    }
    const double masked = generalized_dice_loss<double>(gt, prob, mask);
    const double restricted = generalized_dice_loss<double>(gr, pr, std::vector<bool>(keep.size(), true));
    worst = std::max(worst, std::abs(masked - restricted));
  }
  return {worst <= 1e-12, fmt("max |masked - restricted| = %.2e over 100 triples", worst)};
}

// Direct evaluation: 1 - 2 (sum_l w_l sum_v g p + eps) / (sum_l w_l sum_v (g + p) + eps),
// w_l = 1 / (sum_v g + eps)^2.
double scalar_generalized_dice(const Tensor<double>& gt, const Tensor<double>& prob, const std::vector<bool>& mask) {
  const double eps = 1e-7;
  double num = 0, den = 0;
  for (int l = 0; l < gt.channels(); ++l) {
    if (!mask[l]) continue;
    double g_sum = 0, inter = 0, total = 0;
    for (std::size_t v = 0; v < gt.channel_size(); ++v) {
      const double g = gt.channel(l)[v], p = prob.channel(l)[v];
      g_sum += g;
      inter += g * p;
      total += g + p;
    }
    const double w = 1.0 / ((g_sum + eps) * (g_sum + eps));
    num += w * inter;
    den += w * total;
  }
  return 1.0 - 2.0 * (num + eps) / (den + eps);
}

Outcome loss_oracle() {
  std::mt19937_64 rng(202);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 2 + static_cast<int>(rng() % 5);
    const Shape3 s{1 + static_cast<int>(rng() % 5), 1 + static_cast<int>(rng() % 5), 1 + static_cast<int>(rng() % 5)};
    const Tensor<double> gt = random_onehot(c, s, rng);
    const Tensor<double> prob = random_prob(c, s, rng);
    std::vector<bool> mask(c, true);
    if (trial % 2) mask[rng() % c] = false;
    const double got = generalized_dice_loss<double>(gt, prob, mask);
    worst = std::max(worst, std::abs(got - scalar_generalized_dice(gt, prob, mask)));
  }
  return {worst <= 1e-9, fmt("max |loss - scalar oracle| = %.2e over 100 tensors", worst)};
}

// ---- 4: metrics -------------------------------------------------------------

Outcome metric_oracle() {
  std::mt19937_64 rng(303);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double pp = uniform(rng, 0, 0.6), pg = uniform(rng, 0, 0.6);
    std::vector<uint8_t> pred(16 * 16 * 16), gt(pred.size());
    for (auto& x : pred) x = uniform(rng, 0, 1) < pp;
    for (auto& x : gt) x = uniform(rng, 0, 1) < pg;
    uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      tp += pred[i] && gt[i];
      fp += pred[i] && !gt[i];
      fn += !pred[i] && gt[i];
      tn += !pred[i] && !gt[i];
    }
    const MetricValues m = metrics_from_counts(confusion(pred, gt));
    const MetricValues r = metrics_from_counts(confusion(gt, pred));
    const bool ok = m.dsc == 100.0 * 2 * tp / double(2 * tp + fp + fn) && m.sen == 100.0 * tp / double(tp + fn) &&
                    m.spe == 100.0 * tn / double(tn + fp) && m.pre == 100.0 * tp / double(tp + fp) && r.dsc == m.dsc &&
                    r.sen == m.pre && r.pre == m.sen;
    mismatches += !ok;
  }
  return {mismatches == 0, fmt("%d of 100 random 16^3 pairs disagree with the voxel tally or the swap identities",
                               mismatches)};
}

// ---- 5: component filter ---------------------------------------------------

Outcome component_oracle() {
  std::mt19937_64 rng(404);
  int mismatches = 0, not_idempotent = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Volume v({16, 16, 16}, {1, 1, 1}, VolumeKind::Labelmap);
    const double density = 0.05 + 0.5 * (trial % 10) / 9.0;
    const int labels = 1 + trial % 5;
    for (float& x : v.data) x = uniform(rng, 0, 1) < density ? static_cast<float>(1 + rng() % labels) : 0.0f;
    const Volume out = largest_component_filter(v, 26);
    mismatches += out.data != test::reference_component_filter(v).data;
    not_idempotent += largest_component_filter(out, 26).data != out.data;
  }
  return {mismatches == 0 && not_idempotent == 0,
          fmt("%d oracle mismatches, %d non-idempotent results over 50 labelmaps", mismatches, not_idempotent)};
}

// ---- 6: shapes ---------------------------------------------------------------

Outcome head_shapes() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(505);
  const UNetConfig cfg;  // default network
  const CascadeModel<float> m = init_weights(cfg, rng);
  const Shape3 s{32, 32, 32};
  const std::array<std::pair<int, int>, kGroupCount> expected{{{4, 6}, {4, 5}, {3, 4}}};
  bool ok = true;
  double worst_sum = 0;
  std::string counts;
  for (GroupTag g : kAllGroups) {
    const auto x = test::random_tensor<float>({kImageChannels, s[0], s[1], s[2]}, rng);
    const auto [l1, l2] = cascade_forward(m, x, g, false);
    const auto e = expected[static_cast<int>(g)];
    ok = ok && l1.data.channels() == e.first && l2.data.channels() == e.second;
    ok = ok && l1.data.spatial() == s && l2.data.spatial() == s;
    counts += fmt(" %s:(%d,%d)", std::string(to_string(g)).c_str(), l1.data.channels(), l2.data.channels());
    for (const auto* l : {&l1, &l2}) {
      const Tensor<float> p = softmax_labels(*l);
      for (std::size_t i = 0; i < p.channel_size(); ++i) {
        double sum = 0;
        for (int c = 0; c < p.channels(); ++c) sum += p.channel(c)[i];
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      }
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && worst_sum <= 1e-6 && secs < 60.0;
  return {ok, fmt("heads%s, max |sum p - 1| = %.1e, 32^3 input at %d filters, %.1f s", counts.c_str(), worst_sum,
                  cfg.filters, secs)};
}

// ---- 7: augmentation --------------------------------------------------------

Outcome augmentation_invariants() {
  std::mt19937_64 rng(606);
  const Shape3 s{20, 22, 24};
  Volume img(s, {1.2, 1.2, 1.2}, VolumeKind::Intensity);
  for (float& x : img.data) x = static_cast<float>(uniform(rng, -1, 1));
  Volume lab(s, {1.2, 1.2, 1.2}, VolumeKind::Labelmap);
  for (float& x : lab.data) x = static_cast<float>(rng() % 4);

  const SpatialParams id = SpatialParams::identity(8);
  const bool nearest_exact = apply_spatial(lab, id, 0.0f).data == lab.data;
  const Volume lin = apply_spatial(img, id, 0.0f);
  double lin_err = 0;
  for (std::size_t i = 0; i < img.size(); ++i) lin_err = std::max(lin_err, double(std::abs(lin.data[i] - img.data[i])));

  const std::set<float> allowed(lab.data.begin(), lab.data.end());
  AugmentationRanges r;
  r.translation = 4;
  r.elastic = 3;
  int subset_failures = 0;
  for (int t = 0; t < 100; ++t) {
    const Volume out = apply_spatial(lab, sample_spatial_params(r, rng), 0.0f);
    for (float x : out.data) {
      if (x != 0.0f && !allowed.count(x)) {
        ++subset_failures;
        break;
      }
    }
  }

  // Three sequences holding the same coordinate mesh, warped by the subject
  // pipeline with identity intensity ranges: every output must be identical.
  int misaligned = 0;
  AugmentationRanges shared = r;
  shared.intensity_shift = 0.0;
  shared.intensity_scale_min = shared.intensity_scale_max = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    SubjectSample subj;
    subj.id = "mesh";
    subj.group = GroupTag::G1;
    subj.sequence_mask = sequence_mask(GroupTag::G1);
    subj.label_mask = label_mask(GroupTag::G1);
    Volume mesh(s, {1.2, 1.2, 1.2}, VolumeKind::Intensity);
    for (int z = 0; z < s[0]; ++z)
      for (int y = 0; y < s[1]; ++y)
        for (int x = 0; x < s[2]; ++x) mesh.at(z, y, x) = static_cast<float>(axis == 0 ? z : axis == 1 ? y : x);
    for (auto& q : subj.sequences) q = mesh;
    for (int t = 0; t < 10; ++t) {
      const SubjectSample out = augment_subject(subj, shared, rng);
      misaligned += out.sequences[1].data != out.sequences[0].data || out.sequences[2].data != out.sequences[0].data;
    }
  }
  const bool ok = nearest_exact && lin_err <= 1e-6 && subset_failures == 0 && misaligned == 0;
  return {ok, fmt("identity: nearest %s, trilinear max err %.1e; label-set violations %d/100; misaligned mesh "
                  "warps %d/30",
                  nearest_exact ? "exact" : "differs", lin_err, subset_failures, misaligned)};
}

// ---- 8: normalisation -------------------------------------------------------

double sorted_percentile(std::vector<float> v, double pct) {
  std::sort(v.begin(), v.end());
  const double rank = pct / 100.0 * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (rank - lo) * (double(v[hi]) - v[lo]);
}

Outcome normalization() {
  std::mt19937_64 rng(707);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const Shape3 s{4 + static_cast<int>(rng() % 12), 4 + static_cast<int>(rng() % 12), 4 + static_cast<int>(rng() % 12)};
    Volume v(s, {1, 1, 1}, VolumeKind::Intensity);
    const double scale = std::exp(uniform(rng, -3, 6)), offset = uniform(rng, -500, 500);
    std::normal_distribution<double> nd;
    for (float& x : v.data) x = static_cast<float>(offset + scale * (t % 2 ? nd(rng) : uniform(rng, 0, 1)));
    const Volume n = robust_normalize(v);
    worst = std::max(worst, std::abs(sorted_percentile(n.data, 10) + 1.0));
    worst = std::max(worst, std::abs(sorted_percentile(n.data, 90) - 1.0));
  }
  return {worst <= 1e-6, fmt("max |p10 + 1|, |p90 - 1| = %.2e over 50 volumes", worst)};
}

// ---- 9: EMA -----------------------------------------------------------------

Outcome ema_closed_form() {
  std::mt19937_64 rng(808);
  double worst = 0;
  for (double decay : {0.5, 0.9, 0.999}) {
    ParameterSet<double> e, c;
    e.add("w", {1});
    c.add("w", {1});
    const double e0 = uniform(rng, -1, 1);
    e.values[0][0] = e0;
    std::vector<double> w;
    for (int k = 1; k <= 300; ++k) {
      w.push_back(uniform(rng, -1, 1));
      c.values[0][0] = w.back();
      ema_update(e, c, decay);
      // e_k = d^k e_0 + (1 - d) sum_j d^(k-j) w_j
      double closed = std::pow(decay, k) * e0;
      for (int j = 1; j <= k; ++j) closed += (1 - decay) * std::pow(decay, k - j) * w[j - 1];
      worst = std::max(worst, std::abs(e.values[0][0] - closed));
    }
  }
  ParameterSet<float> a, b;
  a.add("x", {64});
  b.add("x", {64});
  for (float& x : a.values[0]) x = static_cast<float>(uniform(rng, -1, 1));
  for (float& x : b.values[0]) x = static_cast<float>(uniform(rng, -1, 1));
  ema_update(a, b, 0.0);
  const bool copy = a.values == b.values;
  return {worst <= 1e-12 && copy,
          fmt("max |ema - closed form| = %.2e; decay 0 %s", worst, copy ? "copies exactly" : "does not copy")};
}

// ---- 10: ensemble ------------------------------------------------------------

SubjectSample phantom_sample(GroupTag g, uint64_t seed, Shape3 grid) {
  PhantomSpec spec;
  spec.grid_size = grid;
  spec.group = g;
  spec.seed = seed;
  PreprocessOptions pre;
  pre.roi = grid;
  pre.centering = RoiCentering::ScanCenter;
  return preprocess_subject(generate_phantom(spec), pre);
}

Outcome ensemble(const fs::path& work) {
  const fs::path dir = work / "ensemble";
  fs::remove_all(dir);
  fs::create_directories(dir);
  UNetConfig cfg;
  cfg.filters = 8;
  cfg.levels = 3;
  TrainState s = initial_state(cfg, 42, 0);
  std::mt19937_64 rng(1010);
  test::randomize_biases(s.model.params, rng);
  s.ema = s.model.params;
  const fs::path ck = dir / "member.ckpt";
  save_checkpoint(make_checkpoint(s, cfg, LabelSchema{}), ck);

  bool identical = true;
  for (GroupTag g : kAllGroups) {
    const SubjectSample x = phantom_sample(g, 7, {32, 32, 32});
    const Prediction one = predict_subject(load_ensemble({{ck}, true}), x);
    const Prediction five = predict_subject(load_ensemble({std::vector<fs::path>(5, ck), true}), x);
    identical = identical && one.stage2.data == five.stage2.data && one.stage1.data == five.stage1.data;
  }

  Tensor<float> a(2, Shape3{1, 1, 1}), b(2, Shape3{1, 1, 1});
  a.data = {0.2f, 0.8f};
  b.data = {0.4f, 0.6f};
  const Tensor<float> m = average_probabilities({a, b});
  // Binary floats cannot hold 0.3 or 0.7, so "exact" is the correctly rounded
  // mean of the two stored inputs; it must also sit within one ulp of the
  // decimal value.
  bool mean_ok = true;
  const double want[2] = {0.3, 0.7};
  for (int c = 0; c < 2; ++c) {
    const float exact = static_cast<float>((double(a.data[c]) + double(b.data[c])) / 2.0);
    const float decimal = static_cast<float>(want[c]);
    mean_ok = mean_ok && m.data[c] == exact &&
              std::abs(m.data[c] - decimal) <= std::nextafter(decimal, 1.0f) - decimal;
  }
  return {identical && mean_ok,
          fmt("5 identical members vs 1: %s on G1/G2/G3 phantoms; mean of (0.2,0.8),(0.4,0.6) = (%.9g, %.9g)",
              identical ? "identical labels" : "labels differ", m.data[0], m.data[1])};
}

// ---- 11-13: phantom training -------------------------------------------------

// Reduced cascade on a 3+3+3 phantom cohort. The training ROI is 32^3, so the
// voxel-valued augmentation ranges are scaled by 32/128.
struct PhantomRun {
  int64_t iterations = 2000;
  int64_t checkpoint_interval = 500;
  int filters = 16;
  Shape3 train_roi{32, 32, 32};
  Shape3 grid{48, 48, 48};
  double ema_decay = 0.99;
  uint64_t seed = 11;
};

struct Cohort {
  std::vector<SubjectSample> raw;
  TrainingPool pool;
};

Cohort make_cohort(const fs::path& dir, const PhantomRun& run) {
  PhantomSpec templ;
  templ.grid_size = run.grid;
  templ.seed = 3;
  const DatasetManifest m = generate_cohort({3, 3, 3}, templ, dir);
  Cohort c;
  PreprocessOptions pre;
  pre.roi = run.train_roi;
  pre.centering = RoiCentering::LabelBox;
  for (const SubjectEntry& e : m.entries) {
    c.raw.push_back(load_subject(e, LabelSchema{}));
    c.pool.add(preprocess_subject(c.raw.back(), pre));
  }
  return c;
}

TrainingOptions training_options(const PhantomRun& run, const fs::path& ckpt_dir, const char* tag) {
  TrainingOptions opt;
  opt.iterations = run.iterations;
  opt.checkpoint_interval = run.checkpoint_interval;
  opt.network.filters = run.filters;
  opt.ema_decay = run.ema_decay;
  opt.seed = run.seed;
  opt.checkpoint_dir = ckpt_dir;
  const double roi_scale = run.train_roi[0] / 128.0;
  opt.augmentation.translation *= roi_scale;
  opt.augmentation.elastic *= roi_scale;
  const auto t0 = Clock::now();
  opt.on_iteration = [t0, tag, total = run.iterations](int64_t it, double loss) {
    if (it % 100 == 0 || it == total) {
      std::fprintf(stderr, "  [%s] iteration %lld loss %.4f (%.0f s)\n", tag, static_cast<long long>(it), loss,
                   seconds_since(t0));
    }
  };
  return opt;
}

// Ensemble prediction on the full scan, largest-component filtered and written
// on the subject grid.
std::vector<Volume> predict_cohort(const Cohort& c, const fs::path& ckpt, const PhantomRun& run,
                                   const fs::path& out_dir) {
  const Ensemble e = load_ensemble({{ckpt}, true});
  PreprocessOptions pre;
  pre.roi = run.grid;
  pre.centering = RoiCentering::ScanCenter;
  std::vector<Volume> out;
  fs::create_directories(out_dir);
  for (const SubjectSample& raw : c.raw) {
    const Prediction p = predict_subject(e, preprocess_subject(raw, pre));
    const Volume filtered = largest_component_filter(p.stage2, 26);
    out.push_back(export_prediction(filtered, raw.reference(), LabelSchema{}, out_dir / (raw.id + "_pred.nii.gz")));
  }
  return out;
}

// The uninterrupted run: criterion 11 scores it, 12 and 13 compare against it.
struct ReferenceRun {
  fs::path dir;
  Cohort cohort;
  TrainingResult result;
  std::vector<Volume> predictions;
  double seconds = 0;
};

class Reference {
 public:
  Reference(fs::path work, PhantomRun run) : work_(std::move(work)), run_(run) {}

  const PhantomRun& run() const { return run_; }

  const ReferenceRun& get() {
    if (ref_) return *ref_;
    ReferenceRun r;
    r.dir = work_ / "reference";
    fs::remove_all(r.dir);
    const auto t0 = Clock::now();
    r.cohort = make_cohort(r.dir / "data", run_);
    r.result = run_training(r.cohort.pool, training_options(run_, r.dir / "ckpt", "reference"));
    r.predictions = predict_cohort(r.cohort, r.result.checkpoints.back(), run_, r.dir / "pred");
    r.seconds = seconds_since(t0);
    ref_ = std::move(r);
    return *ref_;
  }

 private:
  fs::path work_;
  PhantomRun run_;
  std::optional<ReferenceRun> ref_;
};

Outcome phantom_overfit(Reference& reference) {
  const ReferenceRun& r = reference.get();
  // Worst subject per available foreground label.
  static constexpr const char* kNames[kStage2Classes] = {"BG", "LV", "RV", "MYO", "Scar", "Edema"};
  std::array<double, kStage2Classes> worst;
  worst.fill(101.0);
  for (std::size_t i = 0; i < r.predictions.size(); ++i) {
    const SubjectSample& gt = r.cohort.raw[i];
    const auto avail = stage2_available(gt.group);
    for (int l = 1; l < kStage2Classes; ++l) {
      if (!avail[l]) continue;
      std::vector<uint8_t> p(gt.labels.size()), g(gt.labels.size());
      for (std::size_t v = 0; v < p.size(); ++v) {
        p[v] = r.predictions[i].data[v] == static_cast<float>(l);
        g[v] = gt.labels.data[v] == static_cast<float>(l);
      }
      worst[l] = std::min(worst[l], metrics_from_counts(confusion(p, g)).dsc);
    }
  }
  bool ok = r.seconds < 3600.0;
  std::string detail;
  for (int l = 1; l < kStage2Classes; ++l) {
    ok = ok && worst[l] > 85.0;
    detail += fmt("%s %.1f ", kNames[l], worst[l]);
  }
  return {ok, fmt("min stage-2 DSC over the 9 phantoms: %s(%lld iterations, filters %d, %.0f s)", detail.c_str(),
                  static_cast<long long>(reference.run().iterations), reference.run().filters, r.seconds)};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

bool same_files(const fs::path& a, const fs::path& b) { return fs::exists(b) && file_bytes(a) == file_bytes(b); }

// Files of `a` whose namesake in `b` is missing or differs.
int count_differing(const fs::path& a, const fs::path& b) {
  int n = 0;
  for (const auto& de : fs::directory_iterator(a)) n += !same_files(de.path(), b / de.path().filename());
  return n;
}

Outcome determinism(Reference& reference) {
  const ReferenceRun& r = reference.get();
  const PhantomRun& run = reference.run();
  const fs::path dir = r.dir.parent_path() / "repeat";
  fs::remove_all(dir);
  // The repeat regenerates its cohort from the same seeds.
  const Cohort c = make_cohort(dir / "data", run);
  const TrainingResult again = run_training(c.pool, training_options(run, dir / "ckpt", "repeat"));
  predict_cohort(c, again.checkpoints.back(), run, dir / "pred");
  const int ckpt_diff = count_differing(r.dir / "ckpt", dir / "ckpt");
  const int pred_diff = count_differing(r.dir / "pred", dir / "pred");
  const int ckpts = static_cast<int>(r.result.checkpoints.size());
  return {ckpt_diff == 0 && pred_diff == 0 && again.losses == r.result.losses,
          fmt("second run: %d of %d checkpoints and %d of %zu predictions differ", ckpt_diff, ckpts, pred_diff,
              r.predictions.size())};
}

Outcome resume(Reference& reference) {
  const ReferenceRun& r = reference.get();
  const PhantomRun& run = reference.run();
  const fs::path dir = r.dir.parent_path() / "resumed";
  fs::remove_all(dir);
  const Cohort c = make_cohort(dir / "data", run);

  // Interrupted between two checkpoints, then resumed from the last one.
  const int64_t resume_at = run.iterations / 2 / run.checkpoint_interval * run.checkpoint_interval;
  const int64_t stop = resume_at + run.checkpoint_interval / 2;
  TrainingOptions opt = training_options(run, dir / "ckpt", "resume");
  opt.stop_after = stop;
  const TrainingResult first = run_training(c.pool, opt);
  opt.stop_after = -1;
  const TrainingResult second = run_training(c.pool, opt, periodic_checkpoint_path(dir / "ckpt", 0, resume_at));
  predict_cohort(c, second.checkpoints.back(), run, dir / "pred");

  std::vector<double> joined(first.losses.begin(), first.losses.begin() + resume_at);
  joined.insert(joined.end(), second.losses.begin(), second.losses.end());
  const bool final_same = !first.completed && second.completed &&
                          same_files(r.result.checkpoints.back(), second.checkpoints.back());
  const int ckpt_diff = count_differing(r.dir / "ckpt", dir / "ckpt");
  const int pred_diff = count_differing(r.dir / "pred", dir / "pred");
  return {final_same && ckpt_diff == 0 && pred_diff == 0 && joined == r.result.losses,
          fmt("stopped at %lld, resumed from %lld: final checkpoint %s, %d checkpoints and %d predictions differ",
              static_cast<long long>(stop), static_cast<long long>(resume_at),
              final_same ? "bit-identical" : "differs", ckpt_diff, pred_diff)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir = (fs::temp_directory_path() / "mscare_acceptance").string();
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);
  const fs::path work = workdir;
  Reference reference(work, PhantomRun{});

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"loss mask equivalence", loss_mask_equivalence},
      {"loss formula oracle", loss_oracle},
      {"metric oracle", metric_oracle},
      {"component-filter oracle", component_oracle},
      {"head shapes and softmax", head_shapes},
      {"augmentation invariants", augmentation_invariants},
      {"intensity normalisation", normalization},
      {"EMA closed form", ema_closed_form},
      {"ensemble averaging", [&] { return ensemble(work); }},
      {"phantom overfit", [&] { return phantom_overfit(reference); }},
      {"determinism", [&] { return determinism(reference); }},
      {"resume correctness", [&] { return resume(reference); }},
  };
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    ++ran;
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed ? 1 : 0;
}
