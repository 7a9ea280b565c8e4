#include "mscare/loss.hpp"

#include <cmath>

#include "mscare/kernels.hpp"

namespace mscare {

template <typename T>
double generalized_dice_loss(const Tensor<T>& gt, const Tensor<T>& prob, const std::vector<bool>& mask,
                             Tensor<T>* dprob) {
  if (gt.shape != prob.shape) throw Error("generalized Dice: ground truth and probability shapes differ");
  const int nc = gt.channels();
  if (static_cast<int>(mask.size()) != nc) throw Error("generalized Dice: channel mask has the wrong length");
  bool any = false;
  for (bool m : mask) any = any || m;
  if (!any) throw Error("generalized Dice: channel mask selects no channel");

  const std::size_t n = gt.channel_size();
  std::vector<double> w(nc, 0.0);
  double num = 0.0, den = 0.0;
  for (int c = 0; c < nc; ++c) {
    if (!mask[c]) continue;
    const T* g = gt.channel(c);
    const T* p = prob.channel(c);
    double sg = 0.0, sp = 0.0, sgp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sg += g[i];
      sp += p[i];
      sgp += static_cast<double>(g[i]) * p[i];
    }
    w[c] = 1.0 / ((sg + kDiceEpsilon) * (sg + kDiceEpsilon));
    num += w[c] * sgp;
    den += w[c] * (sg + sp);
  }
  const double a = num + kDiceEpsilon;
  const double b = den + kDiceEpsilon;
  const double loss = 1.0 - 2.0 * a / b;

  if (dprob) {
    *dprob = Tensor<T>(prob.shape);
    const double inv_b2 = 1.0 / (b * b);
    for (int c = 0; c < nc; ++c) {
      if (!mask[c]) continue;
      const T* g = gt.channel(c);
      T* d = dprob->channel(c);
      const double k = -2.0 * w[c] * inv_b2;
      for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<T>(k * (g[i] * b - a));
    }
  }
  return loss;
}

template <typename T>
Tensor<T> one_hot(const std::vector<uint8_t>& classes, const Shape3& spatial, int classes_count) {
  Tensor<T> out(classes_count, spatial);
  if (classes.size() != out.channel_size()) throw Error("class map size does not match the grid");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= classes_count) throw Error("class index out of range");
    out.channel(classes[i])[i] = T(1);
  }
  return out;
}

template <typename T>
double head_dice_term(const Tensor<T>& logits, const std::vector<int>& head_to_class, const Tensor<T>& gt_onehot,
                      const std::vector<bool>& available, Tensor<T>* dlogits) {
  if (static_cast<int>(head_to_class.size()) != logits.channels()) throw Error("head channel map mismatch");
  const Tensor<T> p = nn::softmax(logits);
  Tensor<T> full(gt_onehot.channels(), p.spatial());
  for (int c = 0; c < p.channels(); ++c) {
    std::copy(p.channel(c), p.channel(c) + p.channel_size(), full.channel(head_to_class[c]));
  }
  Tensor<T> dfull;
  const double loss = generalized_dice_loss(gt_onehot, full, available, dlogits ? &dfull : nullptr);
  if (dlogits) {
    Tensor<T> dp(p.shape);
    for (int c = 0; c < p.channels(); ++c) {
      std::copy(dfull.channel(head_to_class[c]), dfull.channel(head_to_class[c]) + p.channel_size(), dp.channel(c));
    }
    *dlogits = nn::softmax_backward(p, dp);
  }
  return loss;
}

#define MSCARE_INSTANTIATE(T)                                                                                     \
  template double generalized_dice_loss(const Tensor<T>&, const Tensor<T>&, const std::vector<bool>&, Tensor<T>*); \
  template Tensor<T> one_hot(const std::vector<uint8_t>&, const Shape3&, int);                                    \
  template double head_dice_term(const Tensor<T>&, const std::vector<int>&, const Tensor<T>&,                     \
                                 const std::vector<bool>&, Tensor<T>*);

MSCARE_INSTANTIATE(float)
MSCARE_INSTANTIATE(double)

#undef MSCARE_INSTANTIATE

}  // namespace mscare
