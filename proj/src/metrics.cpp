#include "mscare/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <sstream>

#include "mscare/nifti.hpp"

namespace mscare {

namespace fs = std::filesystem;

ConfusionCounts confusion(std::span<const uint8_t> pred, std::span<const uint8_t> gt) {
  if (pred.size() != gt.size()) throw Error("confusion: prediction and ground truth differ in size");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    if (p && g) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (g) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

namespace {

double ratio(uint64_t num, uint64_t den, double degenerate) {
  return den == 0 ? degenerate : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricValues metrics_from_counts(const ConfusionCounts& c) {
  const bool both_empty = c.tp == 0 && c.fp == 0 && c.fn == 0;
  const double empty = both_empty ? 100.0 : 0.0;
  MetricValues m;
  m.dsc = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, empty);
  m.sen = ratio(c.tp, c.tp + c.fn, empty);
  m.pre = ratio(c.tp, c.tp + c.fp, empty);
  m.spe = ratio(c.tn, c.tn + c.fp, 100.0);
  return m;
}

EvalLabel parse_eval_label(const std::string& name) {
  EvalLabel out;
  out.name = name;
  std::string part;
  auto add = [&](std::string p) {
    std::transform(p.begin(), p.end(), p.begin(), [](unsigned char ch) { return std::tolower(ch); });
    auto push = [&](TissueClass c) {
      if (std::find(out.classes.begin(), out.classes.end(), c) == out.classes.end()) out.classes.push_back(c);
    };
    if (p == "lv") {
      push(TissueClass::LV);
    } else if (p == "rv") {
      push(TissueClass::RV);
    } else if (p == "healthy") {
      push(TissueClass::Healthy);
    } else if (p == "scar") {
      push(TissueClass::Scar);
    } else if (p == "edema") {
      push(TissueClass::Edema);
    } else if (p == "myo") {
      push(TissueClass::Healthy);
      push(TissueClass::Scar);
      push(TissueClass::Edema);
    } else {
      throw Error("unknown evaluation label: " + (p.empty() ? name : p));
    }
  };
  for (char ch : name) {
    if (ch == '&' || ch == '+') {
      add(part);
      part.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      part += ch;
    }
  }
  add(part);
  return out;
}

std::vector<uint8_t> combined_label_mask(const Volume& lm, const std::vector<TissueClass>& classes,
                                         const LabelSchema& schema) {
  std::vector<int> codes;
  for (TissueClass c : classes) {
    if (c == TissueClass::Background) throw Error("background cannot be an evaluated label");
    codes.push_back(schema.code_of(c));
  }
  std::vector<uint8_t> mask(lm.size());
  for (std::size_t i = 0; i < lm.size(); ++i) {
    const int v = static_cast<int>(lm.data[i]);
    mask[i] = std::find(codes.begin(), codes.end(), v) != codes.end();
  }
  return mask;
}

std::vector<ReportRow> evaluate_subject(const std::string& id, const Volume& pred, const Volume& gt,
                                        const std::vector<EvalLabel>& labels, const LabelSchema& schema) {
  if (pred.shape != gt.shape) throw Error("subject " + id + ": prediction and ground truth grids differ");
  std::vector<ReportRow> rows;
  for (const EvalLabel& l : labels) {
    const auto p = combined_label_mask(pred, l.classes, schema);
    const auto g = combined_label_mask(gt, l.classes, schema);
    rows.push_back({id, l.name, metrics_from_counts(confusion(p, g))});
  }
  return rows;
}

namespace {

// Subject id -> labelmap path found in a directory.
std::map<std::string, fs::path> discover(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("evaluation directory does not exist: " + dir.string());
  std::map<std::string, fs::path> out;
  auto put = [&](const std::string& id, const fs::path& p) {
    if (!out.emplace(id, p).second) throw Error("subject " + id + " has more than one labelmap in " + dir.string());
  };
  for (const auto& de : fs::directory_iterator(dir)) {
    const fs::path p = de.path();
    if (de.is_directory()) {
      for (const char* ext : {".nii.gz", ".nii"}) {
        const fs::path l = p / (std::string("label") + ext);
        if (fs::is_regular_file(l)) {
          put(p.filename().string(), l);
          break;
        }
      }
      continue;
    }
    if (!is_nifti_path(p)) continue;
    std::string stem = p.filename().string();
    stem = stem.substr(0, stem.size() - (stem.ends_with(".nii.gz") ? 7 : 4));
    for (const char* suffix : {"_pred", "_gt", "_label"}) {
      const std::string s(suffix);
      if (stem.size() > s.size() && stem.ends_with(s)) {
        stem.resize(stem.size() - s.size());
        break;
      }
    }
    put(stem, p);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

EvaluationReport evaluate_split(const fs::path& pred_dir, const fs::path& gt_dir, const std::vector<EvalLabel>& labels,
                                const LabelSchema& schema) {
  if (labels.empty()) throw Error("no evaluation labels configured");
  const auto preds = discover(pred_dir);
  const auto gts = discover(gt_dir);
  std::vector<std::string> no_pred, no_gt;
  for (const auto& [id, p] : gts) {
    if (!preds.count(id)) no_pred.push_back(id);
  }
  for (const auto& [id, p] : preds) {
    if (!gts.count(id)) no_gt.push_back(id);
  }
  if (!no_pred.empty() || !no_gt.empty()) {
    std::string msg = "unmatched subjects:";
    for (const auto& id : no_pred) msg += " " + id + " (missing prediction)";
    for (const auto& id : no_gt) msg += " " + id + " (missing ground truth)";
    throw Error(msg);
  }
  if (gts.empty()) throw Error("no labelmaps found in " + gt_dir.string());

  EvaluationReport r;
  for (const auto& [id, gp] : gts) {
    const Volume gt = load_volume(gp, VolumeKind::Labelmap);
    const Volume pred = load_volume(preds.at(id), VolumeKind::Labelmap);
    for (ReportRow& row : evaluate_subject(id, pred, gt, labels, schema)) r.rows.push_back(std::move(row));
  }
  for (const EvalLabel& l : labels) {
    MetricValues sum;
    int n = 0;
    for (const ReportRow& row : r.rows) {
      if (row.label != l.name) continue;
      sum.dsc += row.values.dsc;
      sum.sen += row.values.sen;
      sum.spe += row.values.spe;
      sum.pre += row.values.pre;
      ++n;
    }
    r.means.push_back({"mean", l.name, {sum.dsc / n, sum.sen / n, sum.spe / n, sum.pre / n}});
  }
  return r;
}

std::string EvaluationReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "subject_id,label,dsc,sen,spe,pre\n";
  for (const auto* list : {&rows, &means}) {
    for (const ReportRow& row : *list) {
      out << row.subject_id << "," << row.label << "," << row.values.dsc << "," << row.values.sen << ","
          << row.values.spe << "," << row.values.pre << "\n";
    }
  }
  return out.str();
}

std::string EvaluationReport::to_table() const {
  std::vector<std::array<std::string, 6>> cells;
  cells.push_back({"Subject", "Label", "DSC", "SEN", "SPE", "PRE"});
  for (const auto* list : {&rows, &means}) {
    for (const ReportRow& row : *list) {
      cells.push_back({row.subject_id, row.label, fmt(row.values.dsc), fmt(row.values.sen), fmt(row.values.spe),
                       fmt(row.values.pre)});
    }
  }
  std::array<std::size_t, 6> width{};
  for (const auto& c : cells) {
    for (int i = 0; i < 6; ++i) width[i] = std::max(width[i], c[i].size());
  }
  std::ostringstream out;
  if (!ensemble_note.empty()) out << ensemble_note << "\n";
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (r == 1 || r == rows.size() + 1) {
      for (int i = 0; i < 6; ++i) out << (i ? "-+-" : "") << std::string(width[i], '-');
      out << "\n";
    }
    for (int i = 0; i < 6; ++i) {
      const std::string& s = cells[r][i];
      if (i) out << " | ";
      if (i < 2) {
        out << s << std::string(width[i] - s.size(), ' ');
      } else {
        out << std::string(width[i] - s.size(), ' ') << s;
      }
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace mscare
