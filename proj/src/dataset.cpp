#include "mscare/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mscare/nifti.hpp"

namespace mscare {

namespace fs = std::filesystem;
using nlohmann::json;

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const SubjectEntry& e : entries) {
    if (e.id.empty()) throw Error("manifest entry with an empty subject id");
    if (!seen.insert(e.id).second) throw Error("duplicate subject id in manifest: " + e.id);
    SequenceMask present{};
    for (int s = 0; s < kSequenceCount; ++s) present[s] = !e.sequences[s].empty();
    const auto g = group_for_sequences(present);
    if (!g || *g != e.group) throw Error("subject " + e.id + ": sequence files do not match group " +
                                         std::string(to_string(e.group)));
  }
}

std::vector<int> DatasetManifest::group_members(GroupTag g) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].group == g) out.push_back(static_cast<int>(i));
  }
  return out;
}

const SubjectEntry& DatasetManifest::find(const std::string& id) const {
  for (const SubjectEntry& e : entries) {
    if (e.id == id) return e;
  }
  throw Error("subject not in manifest: " + id);
}

namespace {

// Path of `<dir>/<stem>.nii.gz` or `<dir>/<stem>.nii`, or empty.
std::string find_volume(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".nii.gz", ".nii"}) {
    const fs::path p = dir / (stem + ext);
    if (fs::is_regular_file(p)) return p.string();
  }
  return {};
}

}  // namespace

DatasetManifest build_manifest(const fs::path& dir, const std::string& split, bool require_labels) {
  if (!fs::is_directory(dir)) throw Error("subject directory does not exist: " + dir.string());
  std::vector<fs::path> subjects;
  for (const auto& de : fs::directory_iterator(dir)) {
    if (de.is_directory()) subjects.push_back(de.path());
  }
  std::sort(subjects.begin(), subjects.end());

  DatasetManifest m;
  m.split = split;
  for (const fs::path& sd : subjects) {
    SubjectEntry e;
    e.id = sd.filename().string();
    SequenceMask present{};
    for (int s = 0; s < kSequenceCount; ++s) {
      e.sequences[s] = find_volume(sd, kSequenceFileStems[s]);
      present[s] = !e.sequences[s].empty();
    }
    e.label = find_volume(sd, kLabelFileStem);
    if (!present[0] && !present[1] && !present[2] && e.label.empty()) continue;  // not a subject directory
    const auto g = group_for_sequences(present);
    if (!g) {
      std::string have;
      for (int s = 0; s < kSequenceCount; ++s) {
        if (present[s]) have += (have.empty() ? "" : "+") + std::string(to_string(kAllSequences[s]));
      }
      throw Error("subject " + e.id + " has an unknown sequence availability pattern (" +
                  (have.empty() ? std::string("none") : have) + ")");
    }
    e.group = *g;
    if (require_labels && e.label.empty()) throw Error("subject " + e.id + " has no label file in " + sd.string());
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

DatasetManifest select_subjects(const DatasetManifest& m, const std::vector<std::string>& ids, bool keep) {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  for (const std::string& id : ids) m.find(id);
  DatasetManifest out;
  out.split = m.split;
  for (const SubjectEntry& e : m.entries) {
    if (wanted.count(e.id) == static_cast<std::size_t>(keep)) out.entries.push_back(e);
  }
  return out;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json j;
  j["split"] = m.split;
  j["subjects"] = json::array();
  for (const SubjectEntry& e : m.entries) {
    json s;
    s["id"] = e.id;
    s["group"] = std::string(to_string(e.group));
    for (int q = 0; q < kSequenceCount; ++q) {
      s[kSequenceFileStems[q]] = e.sequences[q].empty() ? json(nullptr) : json(e.sequences[q]);
    }
    s["label"] = e.label.empty() ? json(nullptr) : json(e.label);
    j["subjects"].push_back(std::move(s));
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot write manifest: " + path.string());
  f << j.dump(2) << "\n";
  if (!f) throw Error("failed writing manifest: " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open manifest: " + path.string());
  DatasetManifest m;
  try {
    const json j = json::parse(f);
    m.split = j.at("split").get<std::string>();
    for (const json& s : j.at("subjects")) {
      SubjectEntry e;
      e.id = s.at("id").get<std::string>();
      e.group = parse_group(s.at("group").get<std::string>());
      for (int q = 0; q < kSequenceCount; ++q) {
        const json& v = s.at(kSequenceFileStems[q]);
        if (!v.is_null()) e.sequences[q] = v.get<std::string>();
      }
      if (!s.at("label").is_null()) e.label = s.at("label").get<std::string>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw Error("malformed manifest " + path.string() + ": " + ex.what());
  }
  m.validate();
  return m;
}

SubjectSample load_subject(const SubjectEntry& e, const LabelSchema& schema) {
  SubjectSample s;
  s.id = e.id;
  s.group = e.group;
  s.sequence_mask = sequence_mask(e.group);
  s.label_mask = label_mask(e.group);
  if (e.sequences[0].empty()) throw Error("subject " + e.id + " has no LGE volume");
  for (int q = 0; q < kSequenceCount; ++q) {
    if (e.sequences[q].empty() != !s.sequence_mask[q]) {
      throw Error("subject " + e.id + ": sequence files do not match group " + std::string(to_string(e.group)));
    }
    if (e.sequences[q].empty()) continue;
    s.sequences[q] = load_volume(e.sequences[q], VolumeKind::Intensity);
    if (!s.sequences[q].same_grid(s.sequences[0])) {
      throw Error("subject " + e.id + ": " + std::string(to_string(kAllSequences[q])) +
                  " grid differs from LGE (inputs must be co-registered)");
    }
  }
  for (int q = 0; q < kSequenceCount; ++q) {
    if (!s.sequence_mask[q]) s.sequences[q] = missing_sequence_placeholder(s.sequences[0]);
  }
  if (!e.label.empty()) {
    s.labels = load_volume(e.label, VolumeKind::Labelmap);
    if (!s.labels.same_grid(s.sequences[0])) throw Error("subject " + e.id + ": label grid differs from LGE");
    const auto avail = stage2_available(e.group);
    std::set<int> codes(s.labels.data.begin(), s.labels.data.end());
    for (int code : codes) {
      TissueClass c;
      try {
        c = schema.tissue_of(code);
      } catch (const Error&) {
        throw Error("subject " + e.id + ": label code " + std::to_string(code) + " is not in the label schema");
      }
      if (!avail[static_cast<int>(c)]) {
        throw Error("subject " + e.id + ": label " + std::string(to_string(c)) + " present but group " +
                    std::string(to_string(e.group)) + " has no such label");
      }
    }
  }
  return s;
}

SubjectSample preprocess_subject(const SubjectSample& raw, const PreprocessOptions& opt) {
  SubjectSample out = raw;
  const Volume& ref = raw.reference();
  Vec3 center;
  Volume labels;
  if (raw.has_labels()) labels = resample_isotropic(raw.labels, opt.spacing);
  if (opt.centering == RoiCentering::LabelBox) {
    if (!raw.has_labels()) throw Error("subject " + raw.id + ": label-centred ROI needs a labelmap");
    center = compute_label_center(labels);
  } else {
    Volume probe = resample_isotropic(ref.like(VolumeKind::Labelmap), opt.spacing);
    center = scan_center(probe);
  }
  Volume grid;
  for (int q = 0; q < kSequenceCount; ++q) {
    if (!raw.sequence_mask[q]) continue;
    Volume v;
    try {
      v = robust_normalize(resample_isotropic(raw.sequences[q], opt.spacing));
    } catch (const Error& ex) {
      throw Error("subject " + raw.id + ", " + std::string(to_string(kAllSequences[q])) + ": " + ex.what());
    }
    out.pad_values[q] = min_value(v);
    out.sequences[q] = extract_roi(v, RoiSpec{center, opt.roi, out.pad_values[q]});
    grid = out.sequences[q];
  }
  for (int q = 0; q < kSequenceCount; ++q) {
    if (raw.sequence_mask[q]) continue;
    out.sequences[q] = missing_sequence_placeholder(grid);
    out.pad_values[q] = 0.0f;
  }
  if (raw.has_labels()) out.labels = extract_roi(labels, RoiSpec{center, opt.roi, 0.0f});
  return out;
}

std::vector<uint8_t> tissue_classes(const Volume& labels, const LabelSchema& schema) {
  std::vector<uint8_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = static_cast<uint8_t>(schema.tissue_of(static_cast<int>(labels.data[i])));
  }
  return out;
}

Volume stage1_groundtruth(const SubjectSample& s, const LabelSchema& schema) {
  if (!s.has_labels()) throw Error("subject " + s.id + " has no labelmap");
  Volume out = s.labels.like(VolumeKind::Labelmap);
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    const TissueClass c = schema.tissue_of(static_cast<int>(s.labels.data[i]));
    out.data[i] = static_cast<float>(anatomy_of(c));
  }
  return out;
}

Tensor<float> image_tensor(const SubjectSample& s) {
  const Volume& ref = s.reference();
  Tensor<float> t(kSequenceCount, ref.shape);
  for (int q = 0; q < kSequenceCount; ++q) {
    if (!s.sequences[q].same_grid(ref)) throw Error("subject " + s.id + ": sequences are not on one grid");
    std::copy(s.sequences[q].data.begin(), s.sequences[q].data.end(), t.channel(q));
  }
  return t;
}

TrainItem make_train_item(const SubjectSample& s, const LabelSchema& schema) {
  if (!s.has_labels()) throw Error("subject " + s.id + " has no labelmap");
  TrainItem it;
  it.group = s.group;
  it.image = image_tensor(s);
  it.tissue = tissue_classes(s.labels, schema);
  return it;
}

std::array<int, kGroupCount> draw_triplet_indices(const std::array<int, kGroupCount>& group_sizes,
                                                 std::mt19937_64& rng) {
  std::array<int, kGroupCount> out{};
  for (int g = 0; g < kGroupCount; ++g) {
    if (group_sizes[g] <= 0) {
      throw Error("training set has no subject in group " + std::string(to_string(kAllGroups[g])));
    }
  }
  for (int g = 0; g < kGroupCount; ++g) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    out[g] = std::min(static_cast<int>(u * group_sizes[g]), group_sizes[g] - 1);
  }
  return out;
}

std::array<int, kGroupCount> TrainingPool::sizes() const {
  std::array<int, kGroupCount> s{};
  for (int g = 0; g < kGroupCount; ++g) s[g] = static_cast<int>(groups[g].size());
  return s;
}

SubjectSample augment_subject(const SubjectSample& s, const AugmentationRanges& r, std::mt19937_64& rng) {
  const SpatialParams sp = sample_spatial_params(r, rng);
  const IntensityParams ip = sample_intensity_params(r, s.sequence_mask, rng);
  const SpatialTransform t = SpatialTransform::build(s.reference().shape, sp);
  SubjectSample out;
  out.id = s.id;
  out.group = s.group;
  out.sequence_mask = s.sequence_mask;
  out.label_mask = s.label_mask;
  for (int q = 0; q < kSequenceCount; ++q) {
    if (!s.sequence_mask[q]) {
      out.sequences[q] = s.sequences[q];
      continue;
    }
    out.sequences[q] = apply_intensity(apply_spatial(s.sequences[q], t, s.pad_values[q]), ip, kAllSequences[q]);
    out.pad_values[q] = static_cast<float>(s.pad_values[q] * ip.scale[q] + ip.shift[q]);
  }
  if (s.has_labels()) out.labels = apply_spatial(s.labels, t, 0.0f);
  return out;
}

std::array<SubjectSample, kGroupCount> sample_training_triplet(const TrainingPool& pool, const AugmentationRanges& r,
                                                              std::mt19937_64& rng) {
  const auto idx = draw_triplet_indices(pool.sizes(), rng);
  std::array<SubjectSample, kGroupCount> out;
  for (int g = 0; g < kGroupCount; ++g) {
    const SubjectSample& s = pool.groups[g][idx[g]];
    out[g] = r.enabled ? augment_subject(s, r, rng) : s;
  }
  return out;
}

}  // namespace mscare
