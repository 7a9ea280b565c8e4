#pragma once

#include <vector>

#include "mscare/tensor.hpp"

namespace mscare {

constexpr double kDiceEpsilon = 1e-7;

/// Generalized Dice loss over the channels selected by `mask`:
///   L = 1 - 2 (sum_l w_l sum_i g_li p_li + eps) / (sum_l w_l sum_i (g_li + p_li) + eps)
/// with w_l = 1 / (sum_i g_li + eps)^2. Channels outside the mask take no
/// part in any sum. When `dprob` is given it receives dL/dp (zero on masked-out
/// channels). Accumulation is in double.
template <typename T>
double generalized_dice_loss(const Tensor<T>& gt, const Tensor<T>& prob, const std::vector<bool>& mask,
                             Tensor<T>* dprob = nullptr);

/// One-hot encoding of per-voxel class indices (values in [0, classes)).
template <typename T>
Tensor<T> one_hot(const std::vector<uint8_t>& classes, const Shape3& spatial, int classes_count);

/// Loss term of one head. The head's softmax is scattered into the full class
/// list (`head_to_class[c]` is the class of head channel c); `available` masks
/// the classes the group has labels for. Returns the loss and, if requested,
/// the gradient with respect to the head logits.
template <typename T>
double head_dice_term(const Tensor<T>& logits, const std::vector<int>& head_to_class, const Tensor<T>& gt_onehot,
                      const std::vector<bool>& available, Tensor<T>* dlogits);

}  // namespace mscare
