#include "mscare/network.hpp"

#include <cmath>

#include "mscare/kernels.hpp"

namespace mscare {

void UNetConfig::validate() const {
  if (levels < 1) throw Error("network.levels must be >= 1");
  if (levels > 8) throw Error("network.levels must be <= 8");
  if (convs_per_level < 1) throw Error("network.convs_per_level must be >= 1");
  if (filters < 1) throw Error("network.filters must be >= 1");
  if (kernel != 3) throw Error("network.kernel must be 3");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error("network.dropout must lie in [0, 1)");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw Error("network.leaky_slope must lie in [0, 1)");
  if (pre_convs < 0) throw Error("network.pre_convs must be >= 0");
  if (post_convs < 0) throw Error("network.post_convs must be >= 0");
}

namespace {

ConvRef add_conv(ParameterSet<float>& p, const std::string& name, int cin, int cout, int ksize) {
  ConvRef c;
  c.cin = cin;
  c.cout = cout;
  c.ksize = ksize;
  c.weight = p.add(name + ".weight", {cin, ksize, ksize, ksize, cout});
  c.bias = p.add(name + ".bias", {cout});
  return c;
}

}  // namespace

StageLayout add_stage(ParameterSet<float>& params, const std::string& prefix, const UNetConfig& cfg, int stage,
                      int in_channels, const std::array<int, kGroupCount>& head_channels) {
  cfg.validate();
  StageLayout s;
  s.stage = stage;
  s.in_channels = in_channels;
  const int f = cfg.filters;
  const int k = cfg.kernel;
  int width = in_channels;
  for (int i = 0; i < cfg.pre_convs; ++i) {
    s.pre.push_back(add_conv(params, prefix + ".pre" + std::to_string(i), width, f, k));
    width = f;
  }
  for (int l = 0; l < cfg.levels; ++l) {
    std::vector<ConvRef> convs;
    for (int j = 0; j < cfg.convs_per_level; ++j) {
      convs.push_back(add_conv(params, prefix + ".down" + std::to_string(l) + ".conv" + std::to_string(j), width, f, k));
      width = f;
    }
    s.down.push_back(std::move(convs));
  }
  s.up.resize(cfg.levels - 1);
  for (int l = cfg.levels - 2; l >= 0; --l) {
    int w = 2 * f;  // skip connection + upsampled features
    for (int j = 0; j < cfg.convs_per_level; ++j) {
      s.up[l].push_back(add_conv(params, prefix + ".up" + std::to_string(l) + ".conv" + std::to_string(j), w, f, k));
      w = f;
    }
  }
  for (int i = 0; i < cfg.post_convs; ++i) {
    s.post.push_back(add_conv(params, prefix + ".post" + std::to_string(i), f, f, k));
  }
  for (GroupTag g : kAllGroups) {
    s.heads[static_cast<int>(g)] =
        add_conv(params, prefix + ".head." + std::string(to_string(g)), f, head_channels[static_cast<int>(g)], 1);
  }
  return s;
}

CascadeModel<float> build_cascade(const UNetConfig& cfg) {
  CascadeModel<float> m;
  m.config = cfg;
  std::array<int, kGroupCount> h1, h2;
  for (GroupTag g : kAllGroups) {
    h1[static_cast<int>(g)] = static_cast<int>(stage1_channels(g).size());
    h2[static_cast<int>(g)] = static_cast<int>(stage2_channels(g).size());
  }
  m.stage1 = add_stage(m.params, "stage1", cfg, 1, kImageChannels, h1);
  m.stage2 = add_stage(m.params, "stage2", cfg, 2, kStage2InputChannels, h2);
  return m;
}

CascadeModel<float> init_weights(const UNetConfig& cfg, std::mt19937_64& rng) {
  CascadeModel<float> m = build_cascade(cfg);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& shape = m.params.shapes[i];
    if (shape.size() != 5) continue;  // biases stay zero
    const double fan_in = static_cast<double>(shape[0]) * shape[1] * shape[2] * shape[3];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (float& w : m.params.values[i]) w = static_cast<float>(dist(rng));
  }
  return m;
}

namespace {

template <typename T>
int conv_act(Graph<T>& g, int h, const ConvRef& c, T slope) {
  return g.leaky_relu(g.conv(h, c), slope);
}

template <typename T>
int conv_block(Graph<T>& g, int h, const std::vector<ConvRef>& convs, const UNetConfig& cfg, bool training,
               std::mt19937_64* rng) {
  const T slope = static_cast<T>(cfg.leaky_slope);
  for (std::size_t j = 0; j < convs.size(); ++j) {
    const int next = conv_act(g, h, convs[j], slope);
    g.release(h);
    h = next;
    if (j + 1 < convs.size() && training && cfg.dropout_rate > 0.0) h = g.dropout(h, cfg.dropout_rate, *rng);
  }
  return h;
}

}  // namespace

template <typename T>
int record_stage(Graph<T>& g, const StageLayout& s, const UNetConfig& cfg, int x, GroupTag group, bool training,
                 std::mt19937_64* rng) {
  const Shape3 sp = g.value(x).spatial();
  const int div = cfg.size_divisor();
  static constexpr const char* kAxis[3] = {"depth (axis 0)", "height (axis 1)", "width (axis 2)"};
  for (int a = 0; a < 3; ++a) {
    if (sp[a] % div != 0) {
      throw Error("input " + std::string(kAxis[a]) + " size " + std::to_string(sp[a]) + " is not divisible by " +
                  std::to_string(div) + " (2^(levels-1))");
    }
  }
  if (training && cfg.dropout_rate > 0.0 && rng == nullptr) throw Error("training forward pass needs a random stream");
  const T slope = static_cast<T>(cfg.leaky_slope);

  int h = x;
  for (const ConvRef& c : s.pre) {
    const int next = conv_act(g, h, c, slope);
    if (h != x) g.release(h);
    h = next;
  }
  std::vector<int> skips;
  for (int l = 0; l < cfg.levels; ++l) {
    h = conv_block(g, h, s.down[l], cfg, training, rng);
    if (l + 1 < cfg.levels) {
      skips.push_back(h);
      h = g.max_pool(h);
    }
  }
  for (int l = cfg.levels - 2; l >= 0; --l) {
    const int up = g.upsample(h);
    g.release(h);
    const int merged = g.concat(skips[l], up);
    g.release(skips[l]);
    g.release(up);
    h = conv_block(g, merged, s.up[l], cfg, training, rng);
  }
  for (const ConvRef& c : s.post) {
    const int next = conv_act(g, h, c, slope);
    g.release(h);
    h = next;
  }
  const int out = g.conv(h, s.heads[static_cast<int>(group)]);
  g.release(h);
  return out;
}

template <typename T>
CascadeNodes record_cascade(Graph<T>& g, const CascadeModel<T>& m, int x, GroupTag group, bool training,
                            std::mt19937_64* rng) {
  if (g.value(x).channels() != kImageChannels) {
    throw Error("cascade input must have " + std::to_string(kImageChannels) + " image channels");
  }
  CascadeNodes out;
  out.stage1 = record_stage(g, m.stage1, m.config, x, group, training, rng);
  std::vector<int> target;
  for (AnatomyClass c : stage1_channels(group)) target.push_back(static_cast<int>(c));
  const int full = g.scatter_channels(out.stage1, std::move(target), kStage1Classes);
  const int merged = g.concat(full, x);
  g.release(full);
  out.stage2 = record_stage(g, m.stage2, m.config, merged, group, training, rng);
  return out;
}

template <typename T>
LogitVolume<T> stage_forward(const ParameterSet<T>& params, const StageLayout& s, const UNetConfig& cfg,
                             const Tensor<T>& x, GroupTag group, bool training, std::mt19937_64* rng) {
  Graph<T> g(params, false);
  const int in = g.input(x);
  const int out = record_stage(g, s, cfg, in, group, training, rng);
  return {g.take(out), s.stage, group};
}

template <typename T>
std::pair<LogitVolume<T>, LogitVolume<T>> cascade_forward(const CascadeModel<T>& m, const Tensor<T>& x, GroupTag group,
                                                          bool training, std::mt19937_64* rng) {
  Graph<T> g(m.params, false);
  const int in = g.input(x);
  const CascadeNodes n = record_cascade(g, m, in, group, training, rng);
  LogitVolume<T> s1{g.take(n.stage1), 1, group};
  LogitVolume<T> s2{g.take(n.stage2), 2, group};
  return {std::move(s1), std::move(s2)};
}

template <typename T>
Tensor<T> softmax_labels(const LogitVolume<T>& l) {
  return nn::softmax(l.data);
}

#define MSCARE_INSTANTIATE(T)                                                                                    \
  template int record_stage(Graph<T>&, const StageLayout&, const UNetConfig&, int, GroupTag, bool,                \
                            std::mt19937_64*);                                                                   \
  template CascadeNodes record_cascade(Graph<T>&, const CascadeModel<T>&, int, GroupTag, bool, std::mt19937_64*); \
  template LogitVolume<T> stage_forward(const ParameterSet<T>&, const StageLayout&, const UNetConfig&,           \
                                        const Tensor<T>&, GroupTag, bool, std::mt19937_64*);                     \
  template std::pair<LogitVolume<T>, LogitVolume<T>> cascade_forward(const CascadeModel<T>&, const Tensor<T>&,   \
                                                                     GroupTag, bool, std::mt19937_64*);          \
  template Tensor<T> softmax_labels(const LogitVolume<T>&);

MSCARE_INSTANTIATE(float)
MSCARE_INSTANTIATE(double)

#undef MSCARE_INSTANTIATE

}  // namespace mscare
