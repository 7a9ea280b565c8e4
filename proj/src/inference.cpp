#include "mscare/inference.hpp"

#include <cmath>

#include "mscare/kernels.hpp"
#include "mscare/nifti.hpp"

namespace mscare {

Ensemble load_ensemble(const EnsembleSpec& spec) {
  if (spec.checkpoint_paths.empty()) throw Error("ensemble needs at least one checkpoint");
  Ensemble e;
  for (std::size_t i = 0; i < spec.checkpoint_paths.size(); ++i) {
    const auto& path = spec.checkpoint_paths[i];
    const Checkpoint c = load_checkpoint(path);
    if (i == 0) {
      e.config = c.config;
      e.schema = c.schema;
    } else {
      if (!(c.schema == e.schema)) throw Error("checkpoint label schema differs from the first member: " + path.string());
      if (!(c.config == e.config)) {
        throw Error("checkpoint network configuration differs from the first member: " + path.string());
      }
    }
    e.members.push_back(checkpoint_model(c, spec.use_ema));
  }
  return e;
}

Tensor<float> average_probabilities(const std::vector<Tensor<float>>& probs) {
  if (probs.empty()) throw Error("cannot average an empty set of predictions");
  Tensor<float> out(probs[0].shape);
  std::vector<double> acc(out.size(), 0.0);
  for (const Tensor<float>& p : probs) {
    if (p.shape != out.shape) throw Error("ensemble members produced differently shaped outputs");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p.data[i];
  }
  const double n = static_cast<double>(probs.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i] / n);
  return out;
}

std::vector<uint8_t> argmax_channels(const Tensor<float>& prob) {
  const std::size_t n = prob.channel_size();
  std::vector<uint8_t> out(n, 0);
  std::vector<float> best(prob.channel(0), prob.channel(0) + n);
  for (int c = 1; c < prob.channels(); ++c) {
    const float* p = prob.channel(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] > best[i]) {
        best[i] = p[i];
        out[i] = static_cast<uint8_t>(c);
      }
    }
  }
  return out;
}

namespace {

template <typename Class>
Volume labels_from(const std::vector<uint8_t>& idx, const std::vector<Class>& head, const Volume& grid) {
  Volume out = grid.like(VolumeKind::Labelmap);
  for (std::size_t i = 0; i < idx.size(); ++i) out.data[i] = static_cast<float>(static_cast<int>(head[idx[i]]));
  return out;
}

}  // namespace

Prediction predict_subject(const Ensemble& e, const SubjectSample& sample) {
  if (e.members.empty()) throw Error("ensemble has no members");
  const FlushSubnormals ftz;
  const Tensor<float> x = image_tensor(sample);
  std::vector<Tensor<float>> p1, p2;
  for (const CascadeModel<float>& m : e.members) {
    auto [l1, l2] = cascade_forward(m, x, sample.group, false);
    p1.push_back(softmax_labels(l1));
    p2.push_back(softmax_labels(l2));
  }
  Prediction pred;
  pred.group = sample.group;
  const Tensor<float> m1 = average_probabilities(p1);
  pred.stage2_prob = average_probabilities(p2);
  pred.stage1 = labels_from(argmax_channels(m1), stage1_channels(sample.group), sample.reference());
  pred.stage2 = labels_from(argmax_channels(pred.stage2_prob), stage2_channels(sample.group), sample.reference());
  return pred;
}

namespace {

std::vector<std::array<int, 3>> neighbour_offsets(int connectivity) {
  if (connectivity != 6 && connectivity != 18 && connectivity != 26) {
    throw Error("connectivity must be 6, 18 or 26");
  }
  std::vector<std::array<int, 3>> off;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int n = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (n == 0) continue;
        if (connectivity == 6 && n > 1) continue;
        if (connectivity == 18 && n > 2) continue;
        off.push_back({dz, dy, dx});
      }
  return off;
}

// Keeps the largest component of `mask` (first in raster order on ties).
std::vector<uint8_t> largest_component(const std::vector<uint8_t>& mask, const Shape3& shape,
                                       const std::vector<std::array<int, 3>>& off) {
  const std::size_t n = mask.size();
  std::vector<int> comp(n, -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!mask[seed] || comp[seed] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t count = 0;
    comp[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++count;
      const int z = static_cast<int>(i / (static_cast<std::size_t>(shape[1]) * shape[2]));
      const int y = static_cast<int>((i / shape[2]) % shape[1]);
      const int x = static_cast<int>(i % shape[2]);
      for (const auto& o : off) {
        const int nz = z + o[0], ny = y + o[1], nx = x + o[2];
        if (nz < 0 || ny < 0 || nx < 0 || nz >= shape[0] || ny >= shape[1] || nx >= shape[2]) continue;
        const std::size_t j = (static_cast<std::size_t>(nz) * shape[1] + ny) * shape[2] + nx;
        if (mask[j] && comp[j] < 0) {
          comp[j] = id;
          stack.push_back(j);
        }
      }
    }
    sizes.push_back(count);
  }
  std::vector<uint8_t> keep(n, 0);
  if (sizes.empty()) return keep;
  int best = 0;
  for (std::size_t c = 1; c < sizes.size(); ++c) {
    if (sizes[c] > sizes[best]) best = static_cast<int>(c);
  }
  for (std::size_t i = 0; i < n; ++i) keep[i] = comp[i] == best;
  return keep;
}

}  // namespace

Volume largest_component_filter(const Volume& lm, int connectivity) {
  const auto off = neighbour_offsets(connectivity);
  Volume out = lm;
  const std::size_t n = lm.size();
  std::vector<int> labels;
  for (float v : lm.data) {
    const int l = static_cast<int>(v);
    if (l != 0 && std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
  }
  std::sort(labels.begin(), labels.end());
  std::vector<uint8_t> mask(n);
  for (int l : labels) {
    for (std::size_t i = 0; i < n; ++i) mask[i] = static_cast<int>(lm.data[i]) == l;
    const auto keep = largest_component(mask, lm.shape, off);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i] && !keep[i]) out.data[i] = 0.0f;
    }
  }
  for (std::size_t i = 0; i < n; ++i) mask[i] = out.data[i] != 0.0f;
  const auto keep = largest_component(mask, lm.shape, off);
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) out.data[i] = 0.0f;
  }
  return out;
}

Volume map_to_reference(const Volume& lm, const Volume& reference) {
  Volume out = reference.like(VolumeKind::Labelmap);
  for (int z = 0; z < reference.shape[0]; ++z)
    for (int y = 0; y < reference.shape[1]; ++y)
      for (int x = 0; x < reference.shape[2]; ++x) {
        const Vec3 w = voxel_to_world(reference, {double(z), double(y), double(x)});
        const Vec3 q = world_to_voxel(lm, w);
        const int iz = static_cast<int>(std::floor(q[0] + 0.5));
        const int iy = static_cast<int>(std::floor(q[1] + 0.5));
        const int ix = static_cast<int>(std::floor(q[2] + 0.5));
        if (lm.contains(iz, iy, ix)) out.at(z, y, x) = lm.at(iz, iy, ix);
      }
  return out;
}

Volume classes_to_codes(const Volume& lm, const LabelSchema& schema) {
  Volume out = lm;
  for (float& v : out.data) {
    const int c = static_cast<int>(v);
    if (c < 0 || c >= kStage2Classes) throw Error("class index out of range: " + std::to_string(c));
    v = static_cast<float>(schema.codes[c]);
  }
  return out;
}

Volume export_prediction(const Volume& lm, const Volume& reference, const LabelSchema& schema,
                         const std::filesystem::path& path) {
  Volume out = classes_to_codes(map_to_reference(lm, reference), schema);
  save_volume(out, path);
  return out;
}

}  // namespace mscare
