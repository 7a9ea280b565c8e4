#include "mscare/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <toml.hpp>

namespace mscare {

namespace {

// ---- TOML documents --------------------------------------------------------

struct Value {
  enum class Kind { Bool, Int, Float, String, Array } kind = Kind::Int;
  bool b = false;
  int64_t i = 0;
  double f = 0.0;
  std::string s;
  std::vector<Value> a;
  int line = 0;
};

struct Entry {
  Value value;
  int line = 0;
  bool used = false;
};

[[noreturn]] void fail_at(const std::string& source, int line, const std::string& msg) {
  throw Error(source + ":" + std::to_string(line) + ": " + msg);
}

Value convert(const toml::node& n, const std::string& key, const std::string& source) {
  Value v;
  v.line = static_cast<int>(n.source().begin.line);
  if (const auto* x = n.as_boolean()) {
    v.kind = Value::Kind::Bool;
    v.b = x->get();
  } else if (const auto* x = n.as_integer()) {
    v.kind = Value::Kind::Int;
    v.i = x->get();
  } else if (const auto* x = n.as_floating_point()) {
    v.kind = Value::Kind::Float;
    v.f = x->get();
  } else if (const auto* x = n.as_string()) {
    v.kind = Value::Kind::String;
    v.s = x->get();
  } else if (const auto* x = n.as_array()) {
    v.kind = Value::Kind::Array;
    for (const toml::node& e : *x) v.a.push_back(convert(e, key, source));
  } else {
    fail_at(source, v.line, key + ": unsupported value type");
  }
  return v;
}

// Flattens tables to dotted keys ("training.iterations").
void flatten(const toml::table& t, const std::string& prefix, const std::string& source,
             std::map<std::string, Entry>& out) {
  for (const auto& [k, node] : t) {
    const std::string key = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
    if (const auto* sub = node.as_table()) {
      flatten(*sub, key, source, out);
      continue;
    }
    Value v = convert(node, key, source);
    const int line = v.line;
    out[key] = Entry{std::move(v), line, false};
  }
}

std::map<std::string, Entry> parse_entries(const std::string& text, const std::string& source) {
  try {
    const toml::table doc = toml::parse(text, source);
    std::map<std::string, Entry> out;
    flatten(doc, "", source, out);
    return out;
  } catch (const toml::parse_error& e) {
    fail_at(source, static_cast<int>(e.source().begin.line), std::string(e.description()));
  }
}

// ---- typed access ----------------------------------------------------------

class Reader {
 public:
  Reader(std::map<std::string, Entry>& entries, const std::string& source) : e_(entries), src_(source) {}

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const auto it = e_.find(key);
    const std::string where = it == e_.end() ? src_ : src_ + ":" + std::to_string(it->second.line);
    throw Error(where + ": " + key + ": " + msg);
  }

  const Value* find(const std::string& key) {
    auto it = e_.find(key);
    if (it == e_.end()) return nullptr;
    it->second.used = true;
    return &it->second.value;
  }

  double number(const std::string& key, const Value& v) const {
    if (v.kind == Value::Kind::Float) return v.f;
    if (v.kind == Value::Kind::Int) return static_cast<double>(v.i);
    fail(key, "expected a number");
  }
  int64_t integer(const std::string& key, const Value& v) const {
    if (v.kind != Value::Kind::Int) fail(key, "expected an integer");
    return v.i;
  }

  void get(const std::string& key, double& out) {
    if (const Value* v = find(key)) out = number(key, *v);
  }
  void get(const std::string& key, int64_t& out) {
    if (const Value* v = find(key)) out = integer(key, *v);
  }
  void get(const std::string& key, int& out) {
    if (const Value* v = find(key)) {
      const int64_t n = integer(key, *v);
      if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) fail(key, "integer out of range");
      out = static_cast<int>(n);
    }
  }
  void get(const std::string& key, uint64_t& out) {
    if (const Value* v = find(key)) {
      const int64_t n = integer(key, *v);
      if (n < 0) fail(key, "must be >= 0");
      out = static_cast<uint64_t>(n);
    }
  }
  void get(const std::string& key, bool& out) {
    if (const Value* v = find(key)) {
      if (v->kind != Value::Kind::Bool) fail(key, "expected true or false");
      out = v->b;
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const Value* v = find(key)) {
      if (v->kind != Value::Kind::String) fail(key, "expected a string");
      out = v->s;
    }
  }
  void get(const std::string& key, std::vector<std::string>& out) {
    if (const Value* v = find(key)) {
      if (v->kind != Value::Kind::Array) fail(key, "expected an array of strings");
      out.clear();
      for (const Value& x : v->a) {
        if (x.kind != Value::Kind::String) fail(key, "expected an array of strings");
        out.push_back(x.s);
      }
    }
  }
  template <std::size_t N>
  void get(const std::string& key, std::array<double, N>& out) {
    if (const Value* v = find(key)) {
      if (v->kind != Value::Kind::Array || v->a.size() != N) fail(key, "expected an array of " + std::to_string(N) + " numbers");
      for (std::size_t k = 0; k < N; ++k) out[k] = number(key, v->a[k]);
    }
  }
  template <std::size_t N>
  void get(const std::string& key, std::array<int, N>& out) {
    if (const Value* v = find(key)) {
      if (v->kind != Value::Kind::Array || v->a.size() != N) {
        fail(key, "expected an array of " + std::to_string(N) + " integers");
      }
      for (std::size_t k = 0; k < N; ++k) {
        const int64_t n = integer(key, v->a[k]);
        if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) fail(key, "integer out of range");
        out[k] = static_cast<int>(n);
      }
    }
  }
  void range(const std::string& key, double& lo, double& hi) {
    std::array<double, 2> r{lo, hi};
    get(key, r);
    lo = r[0];
    hi = r[1];
  }

  std::map<std::string, Entry>& entries() { return e_; }

 private:
  std::map<std::string, Entry>& e_;
  std::string src_;
};

constexpr const char* kLabelKeys[kStage2Classes] = {"background", "lv", "rv", "healthy", "scar", "edema"};
constexpr const char* kContrastKeys[kSequenceCount] = {"contrast_lge", "contrast_t2", "contrast_bssfp"};

}  // namespace

void RunConfig::validate() const {
  if (data.root.empty()) throw Error("data.root must not be empty");
  try {
    labels.validate();
  } catch (const Error& e) {
    throw Error(std::string("labels: ") + e.what());
  }
  if (!(preprocess.spacing > 0.0)) throw Error("preprocess.spacing must be > 0");
  augmentation.validate();
  network.validate();
  const TrainingConfig& t = training;
  if (t.iterations < 0) throw Error("training.iterations must be >= 0");
  if (!(t.learning_rate > 0.0)) throw Error("training.learning_rate must be > 0");
  if (!(t.beta1 >= 0.0 && t.beta1 < 1.0)) throw Error("training.beta1 must lie in [0, 1)");
  if (!(t.beta2 >= 0.0 && t.beta2 < 1.0)) throw Error("training.beta2 must lie in [0, 1)");
  if (!(t.adam_epsilon > 0.0)) throw Error("training.adam_epsilon must be > 0");
  if (!(t.lambda1 >= 0.0)) throw Error("training.lambda1 must be >= 0");
  if (!(t.lambda2 >= 0.0)) throw Error("training.lambda2 must be >= 0");
  if (!(t.ema_decay >= 0.0 && t.ema_decay < 1.0)) throw Error("training.ema_decay must lie in [0, 1)");
  if (t.seed < 0) throw Error("training.seed must be >= 0");
  if (t.checkpoint_interval < 0) throw Error("training.checkpoint_interval must be >= 0");
  if (t.checkpoint_dir.empty()) throw Error("training.checkpoint_dir must not be empty");
  if (t.fold_id < 0) throw Error("training.fold_id must be >= 0");
  const int div = network.size_divisor();
  for (int a = 0; a < 3; ++a) {
    if (t.roi_size[a] <= 0 || t.roi_size[a] % div != 0) {
      throw Error("training.roi_size must be positive multiples of " + std::to_string(div));
    }
    if (inference.roi_size[a] <= 0 || inference.roi_size[a] % div != 0) {
      throw Error("inference.roi_size must be positive multiples of " + std::to_string(div));
    }
  }
  for (const auto& [k, ids] : folds) {
    if (k < 0) throw Error("folds: fold ids must be >= 0");
    if (ids.empty()) throw Error("folds.fold" + std::to_string(k) + " must list at least one subject");
  }
  if (inference.connectivity != 6 && inference.connectivity != 18 && inference.connectivity != 26) {
    throw Error("inference.connectivity must be 6, 18 or 26");
  }
  if (evaluation.labels.empty()) throw Error("evaluation.labels must not be empty");
  phantom.spec.validate();
  for (int c : phantom.counts) {
    if (c < 0) throw Error("phantom.counts must be >= 0");
  }
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  auto entries = parse_entries(text, source);
  Reader r(entries, source);
  RunConfig c;

  r.get("data.root", c.data.root);
  r.get("data.train_dir", c.data.train_dir);
  r.get("data.validation_dir", c.data.validation_dir);
  r.get("data.test_dir", c.data.test_dir);

  for (int k = 0; k < kStage2Classes; ++k) r.get(std::string("labels.") + kLabelKeys[k], c.labels.codes[k]);

  r.get("preprocess.spacing", c.preprocess.spacing);

  AugmentationRanges& a = c.augmentation;
  r.get("augmentation.enabled", a.enabled);
  r.get("augmentation.translation", a.translation);
  r.get("augmentation.rotation", a.rotation);
  r.range("augmentation.iso_scale", a.iso_scale_min, a.iso_scale_max);
  r.range("augmentation.aniso_scale", a.aniso_scale_min, a.aniso_scale_max);
  r.get("augmentation.elastic_nodes", a.elastic_nodes);
  r.get("augmentation.elastic", a.elastic);
  r.get("augmentation.intensity_shift", a.intensity_shift);
  r.range("augmentation.intensity_scale", a.intensity_scale_min, a.intensity_scale_max);

  UNetConfig& n = c.network;
  r.get("network.levels", n.levels);
  r.get("network.convs_per_level", n.convs_per_level);
  r.get("network.filters", n.filters);
  r.get("network.kernel", n.kernel);
  r.get("network.dropout", n.dropout_rate);
  r.get("network.leaky_slope", n.leaky_slope);
  r.get("network.pre_convs", n.pre_convs);
  r.get("network.post_convs", n.post_convs);

  TrainingConfig& t = c.training;
  r.get("training.iterations", t.iterations);
  r.get("training.learning_rate", t.learning_rate);
  r.get("training.beta1", t.beta1);
  r.get("training.beta2", t.beta2);
  r.get("training.adam_epsilon", t.adam_epsilon);
  r.get("training.lambda1", t.lambda1);
  r.get("training.lambda2", t.lambda2);
  r.get("training.ema_decay", t.ema_decay);
  r.get("training.roi_size", t.roi_size);
  r.get("training.seed", t.seed);
  r.get("training.checkpoint_interval", t.checkpoint_interval);
  r.get("training.checkpoint_dir", t.checkpoint_dir);
  r.get("training.fold_id", t.fold_id);

  for (auto& [key, e] : entries) {
    if (key.rfind("folds.", 0) != 0) continue;
    const std::string name = key.substr(6);
    if (name.size() < 5 || name.rfind("fold", 0) != 0 ||
        name.find_first_not_of("0123456789", 4) != std::string::npos || name.size() > 12) {
      r.fail(key, "fold keys must be named fold<N>");
    }
    std::vector<std::string> ids;
    r.get(key, ids);
    c.folds[std::stoi(name.substr(4))] = ids;
  }

  InferenceConfig& inf = c.inference;
  r.get("inference.checkpoints", inf.checkpoints);
  r.get("inference.use_ema", inf.use_ema);
  r.get("inference.roi_size", inf.roi_size);
  r.get("inference.connectivity", inf.connectivity);
  r.get("inference.output_dir", inf.output_dir);

  r.get("evaluation.labels", c.evaluation.labels);

  PhantomConfig& ph = c.phantom;
  r.get("phantom.grid_size", ph.spec.grid_size);
  r.get("phantom.spacing", ph.spec.spacing);
  r.get("phantom.lv_radius", ph.spec.lv_radius);
  r.get("phantom.lv_elongation", ph.spec.lv_elongation);
  r.get("phantom.wall_thickness", ph.spec.wall_thickness);
  r.get("phantom.rv_offset", ph.spec.rv_offset);
  r.get("phantom.rv_radius", ph.spec.rv_radius);
  r.get("phantom.scar_count", ph.spec.scar_count);
  r.get("phantom.edema_count", ph.spec.edema_count);
  r.get("phantom.lesion_radius", ph.spec.lesion_radius);
  r.get("phantom.noise_sigma", ph.spec.noise_sigma);
  r.get("phantom.center_jitter", ph.spec.center_jitter);
  r.get("phantom.seed", ph.spec.seed);
  for (int q = 0; q < kSequenceCount; ++q) r.get(std::string("phantom.") + kContrastKeys[q], ph.spec.contrast[q]);
  r.get("phantom.counts", ph.counts);
  r.get("phantom.output_dir", ph.output_dir);

  for (const auto& [key, e] : entries) {
    if (!e.used) throw Error(source + ":" + std::to_string(e.line) + ": unknown key '" + key + "'");
  }

  // Point validation errors at the line of the offending key when possible.
  try {
    c.validate();
  } catch (const Error& e) {
    const std::string msg = e.what();
    for (const auto& [key, entry] : entries) {
      if (msg.rfind(key, 0) == 0) throw Error(source + ":" + std::to_string(entry.line) + ": " + msg);
    }
    throw Error(source + ": " + msg);
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path, bool apply_environment) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  RunConfig c = parse_config(ss.str(), path.string());
  if (apply_environment) {
    if (const char* v = std::getenv("MSCARE_DATA_ROOT"); v && *v) c.data.root = v;
    if (const char* v = std::getenv("MSCARE_CHECKPOINT_DIR"); v && *v) c.training.checkpoint_dir = v;
  }
  return c;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') {
      out += '\\';
      out += ch;
    } else if (ch == '\n') {
      out += "\\n";
    } else if (ch == '\t') {
      out += "\\t";
    } else {
      out += ch;
    }
  }
  return out + "\"";
}

std::string list(const std::vector<std::string>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + quote(v[i]);
  return out + "]";
}

template <typename T, std::size_t N>
std::string arr(const std::array<T, N>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += num(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out + "]";
}

}  // namespace

std::string dump_config(const RunConfig& c) {
  std::ostringstream o;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  o << "[data]\n"
    << "root = " << quote(c.data.root) << "\n"
    << "train_dir = " << quote(c.data.train_dir) << "\n"
    << "validation_dir = " << quote(c.data.validation_dir) << "\n"
    << "test_dir = " << quote(c.data.test_dir) << "\n\n";
  o << "[labels]\n";
  for (int k = 0; k < kStage2Classes; ++k) o << kLabelKeys[k] << " = " << c.labels.codes[k] << "\n";
  o << "\n[preprocess]\nspacing = " << num(c.preprocess.spacing) << "\n\n";
  const AugmentationRanges& a = c.augmentation;
  o << "[augmentation]\n"
    << "enabled = " << b(a.enabled) << "\n"
    << "translation = " << num(a.translation) << "\n"
    << "rotation = " << num(a.rotation) << "\n"
    << "iso_scale = [" << num(a.iso_scale_min) << ", " << num(a.iso_scale_max) << "]\n"
    << "aniso_scale = [" << num(a.aniso_scale_min) << ", " << num(a.aniso_scale_max) << "]\n"
    << "elastic_nodes = " << a.elastic_nodes << "\n"
    << "elastic = " << num(a.elastic) << "\n"
    << "intensity_shift = " << num(a.intensity_shift) << "\n"
    << "intensity_scale = [" << num(a.intensity_scale_min) << ", " << num(a.intensity_scale_max) << "]\n\n";
  const UNetConfig& n = c.network;
  o << "[network]\n"
    << "levels = " << n.levels << "\n"
    << "convs_per_level = " << n.convs_per_level << "\n"
    << "filters = " << n.filters << "\n"
    << "kernel = " << n.kernel << "\n"
    << "dropout = " << num(n.dropout_rate) << "\n"
    << "leaky_slope = " << num(n.leaky_slope) << "\n"
    << "pre_convs = " << n.pre_convs << "\n"
    << "post_convs = " << n.post_convs << "\n\n";
  const TrainingConfig& t = c.training;
  o << "[training]\n"
    << "iterations = " << t.iterations << "\n"
    << "learning_rate = " << num(t.learning_rate) << "\n"
    << "beta1 = " << num(t.beta1) << "\n"
    << "beta2 = " << num(t.beta2) << "\n"
    << "adam_epsilon = " << num(t.adam_epsilon) << "\n"
    << "lambda1 = " << num(t.lambda1) << "\n"
    << "lambda2 = " << num(t.lambda2) << "\n"
    << "ema_decay = " << num(t.ema_decay) << "\n"
    << "roi_size = " << arr(t.roi_size) << "\n"
    << "seed = " << t.seed << "\n"
    << "checkpoint_interval = " << t.checkpoint_interval << "\n"
    << "checkpoint_dir = " << quote(t.checkpoint_dir) << "\n"
    << "fold_id = " << t.fold_id << "\n\n";
  o << "[folds]\n";
  for (const auto& [k, ids] : c.folds) o << "fold" << k << " = " << list(ids) << "\n";
  const InferenceConfig& inf = c.inference;
  o << "\n[inference]\n"
    << "checkpoints = " << list(inf.checkpoints) << "\n"
    << "use_ema = " << b(inf.use_ema) << "\n"
    << "roi_size = " << arr(inf.roi_size) << "\n"
    << "connectivity = " << inf.connectivity << "\n"
    << "output_dir = " << quote(inf.output_dir) << "\n\n";
  o << "[evaluation]\nlabels = " << list(c.evaluation.labels) << "\n\n";
  const PhantomSpec& p = c.phantom.spec;
  o << "[phantom]\n"
    << "grid_size = " << arr(p.grid_size) << "\n"
    << "spacing = " << num(p.spacing) << "\n"
    << "lv_radius = " << num(p.lv_radius) << "\n"
    << "lv_elongation = " << num(p.lv_elongation) << "\n"
    << "wall_thickness = " << num(p.wall_thickness) << "\n"
    << "rv_offset = " << arr(p.rv_offset) << "\n"
    << "rv_radius = " << num(p.rv_radius) << "\n"
    << "scar_count = " << p.scar_count << "\n"
    << "edema_count = " << p.edema_count << "\n"
    << "lesion_radius = " << num(p.lesion_radius) << "\n"
    << "noise_sigma = " << num(p.noise_sigma) << "\n"
    << "center_jitter = " << num(p.center_jitter) << "\n"
    << "seed = " << p.seed << "\n";
  for (int q = 0; q < kSequenceCount; ++q) o << kContrastKeys[q] << " = " << arr(p.contrast[q]) << "\n";
  o << "counts = " << arr(c.phantom.counts) << "\n"
    << "output_dir = " << quote(c.phantom.output_dir) << "\n";
  return o.str();
}

}  // namespace mscare
