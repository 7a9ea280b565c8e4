#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "mscare/config.hpp"
#include "mscare/dataset.hpp"
#include "mscare/inference.hpp"
#include "mscare/metrics.hpp"
#include "mscare/nifti.hpp"
#include "mscare/phantom.hpp"
#include "mscare/trainer.hpp"

namespace fs = std::filesystem;
using namespace mscare;

namespace {

// Run log: the command line and the resolved configuration, then progress lines.
class RunLog {
 public:
  RunLog(const fs::path& dir, const std::string& command, const std::string& argv_line, const RunConfig* cfg) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    path_ = dir / ("mscare_" + command + ".log");
    out_.open(path_);
    if (!out_) throw Error("cannot write run log " + path_.string());
    out_ << "# " << argv_line << "\n";
    if (cfg) out_ << dump_config(*cfg);
    out_ << "# ----\n";
    out_.flush();
  }

  void line(const std::string& s) {
    std::cerr << s << "\n";
    out_ << s << "\n";
    out_.flush();
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

fs::path data_dir(const RunConfig& c, const std::string& split) {
  const fs::path root = c.data.root;
  if (split == "train") return root / c.data.train_dir;
  if (split == "validation") return root / c.data.validation_dir;
  if (split == "test") return root / c.data.test_dir;
  throw Error("unknown split '" + split + "' (expected train, validation or test)");
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct Common {
  std::string config;
  std::string argv_line;
};

RunConfig require_config(const Common& c) {
  if (c.config.empty()) throw Error("--config is required");
  return load_config(c.config);
}

int cmd_phantom_gen(const Common& common, const std::string& out_override) {
  const RunConfig cfg = require_config(common);
  const fs::path out = out_override.empty() ? fs::path(cfg.phantom.output_dir) : fs::path(out_override);
  RunLog log(out, "phantom-gen", common.argv_line, &cfg);
  const DatasetManifest m = generate_cohort(cfg.phantom.counts, cfg.phantom.spec, out, cfg.labels);
  log.line("wrote " + std::to_string(m.entries.size()) + " phantoms to " + out.string());
  return 0;
}

int cmd_preprocess(const Common& common, const std::string& split, const std::string& out_override) {
  const RunConfig cfg = require_config(common);
  const fs::path in = data_dir(cfg, split);
  const fs::path out = out_override.empty() ? fs::path(cfg.data.root) / "preprocessed" / split : fs::path(out_override);
  RunLog log(out, "preprocess", common.argv_line, &cfg);
  const DatasetManifest m = build_manifest(in, split, false);
  DatasetManifest written;
  written.split = split;
  for (const SubjectEntry& e : m.entries) {
    const SubjectSample raw = load_subject(e, cfg.labels);
    PreprocessOptions opt;
    opt.spacing = cfg.preprocess.spacing;
    opt.roi = split == "train" ? cfg.training.roi_size : cfg.inference.roi_size;
    opt.centering = raw.has_labels() && split == "train" ? RoiCentering::LabelBox : RoiCentering::ScanCenter;
    const SubjectSample s = preprocess_subject(raw, opt);
    const fs::path dir = out / s.id;
    fs::create_directories(dir);
    SubjectEntry w;
    w.id = s.id;
    w.group = s.group;
    for (int q = 0; q < kSequenceCount; ++q) {
      if (!s.sequence_mask[q]) continue;
      const fs::path p = dir / (std::string(kSequenceFileStems[q]) + ".nii.gz");
      save_volume(s.sequences[q], p);
      w.sequences[q] = p.string();
    }
    if (s.has_labels()) {
      const fs::path p = dir / (std::string(kLabelFileStem) + ".nii.gz");
      save_volume(s.labels, p);
      w.label = p.string();
    }
    written.entries.push_back(std::move(w));
    log.line("preprocessed " + s.id + " (" + std::string(to_string(s.group)) + ")");
  }
  save_manifest(written, out / "manifest.json");
  return 0;
}

int cmd_train(const Common& common, std::optional<int> fold_arg, const std::string& resume) {
  RunConfig cfg = require_config(common);
  const int fold = fold_arg.value_or(cfg.training.fold_id);
  if (fold < 0) throw Error("--fold must be >= 0");
  const fs::path ckpt_dir = cfg.training.checkpoint_dir;
  RunLog log(ckpt_dir, "train_fold" + std::to_string(fold), common.argv_line, &cfg);

  DatasetManifest m = build_manifest(data_dir(cfg, "train"), "train", true);
  if (!cfg.folds.empty()) {
    const auto it = cfg.folds.find(fold);
    if (it == cfg.folds.end()) throw Error("fold " + std::to_string(fold) + " is not defined in [folds]");
    m = select_subjects(m, it->second, false);
  }
  PreprocessOptions pre;
  pre.spacing = cfg.preprocess.spacing;
  pre.roi = cfg.training.roi_size;
  pre.centering = RoiCentering::LabelBox;
  TrainingPool pool;
  for (const SubjectEntry& e : m.entries) pool.add(preprocess_subject(load_subject(e, cfg.labels), pre));
  const auto sizes = pool.sizes();
  log.line("fold " + std::to_string(fold) + ": training subjects G1=" + std::to_string(sizes[0]) +
           " G2=" + std::to_string(sizes[1]) + " G3=" + std::to_string(sizes[2]));

  TrainingOptions opt;
  opt.iterations = cfg.training.iterations;
  opt.adam = AdamConfig{cfg.training.learning_rate, cfg.training.beta1, cfg.training.beta2, cfg.training.adam_epsilon};
  opt.weights = LossWeights{cfg.training.lambda1, cfg.training.lambda2};
  opt.ema_decay = cfg.training.ema_decay;
  opt.seed = static_cast<uint64_t>(cfg.training.seed);
  opt.fold = fold;
  opt.checkpoint_interval = cfg.training.checkpoint_interval;
  opt.checkpoint_dir = ckpt_dir;
  opt.augmentation = cfg.augmentation;
  opt.network = cfg.network;
  opt.schema = cfg.labels;
  const int64_t report = std::max<int64_t>(1, cfg.training.iterations / 100);
  const auto start = std::chrono::steady_clock::now();
  opt.on_iteration = [&](int64_t it, double loss) {
    if (it % report != 0 && it != cfg.training.iterations) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.line("iter " + std::to_string(it) + " loss " + fixed(loss, 6) + " elapsed " + fixed(secs, 1) + "s");
  };
  std::optional<fs::path> resume_path;
  if (!resume.empty()) {
    resume_path = fs::path(resume);
    log.line("resuming from " + resume);
  }
  const TrainingResult r = run_training(pool, opt, resume_path);
  log.line("wrote " + r.checkpoints.back().string());
  return 0;
}

int cmd_infer(const Common& common, const std::string& split, const std::string& input_override,
              const std::vector<std::string>& ckpt_override, const std::string& out_override) {
  const RunConfig cfg = require_config(common);
  const fs::path in = input_override.empty() ? data_dir(cfg, split) : fs::path(input_override);
  const fs::path out = out_override.empty() ? fs::path(cfg.inference.output_dir) : fs::path(out_override);
  const std::vector<std::string>& ckpts = ckpt_override.empty() ? cfg.inference.checkpoints : ckpt_override;
  if (ckpts.empty()) throw Error("no checkpoints given (use --checkpoint or inference.checkpoints)");
  RunLog log(out, "infer", common.argv_line, &cfg);

  EnsembleSpec spec;
  for (const std::string& c : ckpts) spec.checkpoint_paths.emplace_back(c);
  spec.use_ema = cfg.inference.use_ema;
  const Ensemble ens = load_ensemble(spec);
  if (!(ens.schema == cfg.labels)) throw Error("checkpoint label codes differ from the configuration [labels]");
  log.line("ensemble of " + std::to_string(ens.members.size()) + " member(s)");

  const DatasetManifest m = build_manifest(in, split, false);
  PreprocessOptions pre;
  pre.spacing = cfg.preprocess.spacing;
  pre.roi = cfg.inference.roi_size;
  pre.centering = RoiCentering::ScanCenter;
  for (const SubjectEntry& e : m.entries) {
    const SubjectSample raw = load_subject(e, cfg.labels);
    const Prediction p = predict_subject(ens, preprocess_subject(raw, pre));
    const Volume filtered = largest_component_filter(p.stage2, cfg.inference.connectivity);
    const fs::path dst = out / (e.id + "_pred.nii.gz");
    export_prediction(filtered, raw.reference(), cfg.labels, dst);
    log.line("predicted " + e.id + " -> " + dst.string());
  }
  return 0;
}

int cmd_evaluate(const Common& common, const std::string& pred, const std::string& gt,
                 const std::vector<std::string>& label_override, const std::string& csv) {
  RunConfig cfg;
  if (!common.config.empty()) cfg = load_config(common.config);
  std::vector<EvalLabel> labels;
  for (const std::string& l : label_override.empty() ? cfg.evaluation.labels : label_override) {
    labels.push_back(parse_eval_label(l));
  }
  EvaluationReport r = evaluate_split(pred, gt, labels, cfg.labels);
  std::cout << r.to_table();
  if (!csv.empty()) {
    const fs::path p = csv;
    RunLog log(p.parent_path().empty() ? fs::path(".") : p.parent_path(), "evaluate", common.argv_line, &cfg);
    std::ofstream f(p);
    if (!(f << r.to_csv())) throw Error("cannot write " + p.string());
    log.line("wrote " + p.string());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-sequence cascaded myocardial scar segmentation"};
  app.require_subcommand(1);
  Common common;
  for (int i = 0; i < argc; ++i) common.argv_line += (i ? " " : "") + std::string(argv[i]);

  std::string out, split = "train", infer_split = "test", resume, input, pred, gt, csv;
  std::optional<int> fold;
  std::vector<std::string> ckpts, labels;

  auto* phantom = app.add_subcommand("phantom-gen", "Write a synthetic multi-sequence cohort");
  phantom->add_option("--config", common.config, "Run configuration (TOML)")->required();
  phantom->add_option("--out", out, "Output directory (default phantom.output_dir)");

  auto* preprocess = app.add_subcommand("preprocess", "Resample, normalise and crop a split");
  preprocess->add_option("--config", common.config, "Run configuration (TOML)")->required();
  preprocess->add_option("--split", split, "train, validation or test")->capture_default_str();
  preprocess->add_option("--out", out, "Output directory (default <data.root>/preprocessed/<split>)");

  auto* train = app.add_subcommand("train", "Train one fold of the cascade");
  train->add_option("--config", common.config, "Run configuration (TOML)")->required();
  train->add_option("--fold", fold, "Fold id (default training.fold_id)");
  train->add_option("--resume", resume, "Checkpoint to resume from");

  auto* infer = app.add_subcommand("infer", "Ensemble prediction for a split");
  infer->add_option("--config", common.config, "Run configuration (TOML)")->required();
  infer->add_option("--split", infer_split, "train, validation or test")->capture_default_str();
  infer->add_option("--input", input, "Input directory (overrides --split)");
  infer->add_option("--checkpoint", ckpts, "Ensemble member (repeatable; default inference.checkpoints)");
  infer->add_option("--out", out, "Output directory (default inference.output_dir)");

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evaluate->add_option("--config", common.config, "Run configuration (labels and codes)");
  evaluate->add_option("--pred", pred, "Prediction directory")->required();
  evaluate->add_option("--gt", gt, "Ground-truth directory")->required();
  evaluate->add_option("--label", labels, "Evaluated structure, e.g. Scar or Scar&Edema (repeatable)");
  evaluate->add_option("--csv", csv, "Write per-subject rows as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*phantom) return cmd_phantom_gen(common, out);
    if (*preprocess) return cmd_preprocess(common, split, out);
    if (*train) return cmd_train(common, fold, resume);
    if (*infer) return cmd_infer(common, infer_split, input, ckpts, out);
    if (*evaluate) return cmd_evaluate(common, pred, gt, labels, csv);
  } catch (const std::exception& e) {
    std::cerr << "mscare: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
