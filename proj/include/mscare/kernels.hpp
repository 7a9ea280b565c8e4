#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mscare/tensor.hpp"

/// Forward and backward primitives of the volumetric network. All functions
/// are deterministic for a fixed input; reductions run in a fixed order.
namespace mscare::nn {

/// Convolution weights are laid out as [cin][tap][cout], tap running over the
/// kd, kh, kw offsets of a cubic kernel (kw fastest). Zero padding keeps the
/// spatial size; `ksize` is 1 or 3.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout, int ksize);

/// Accumulates into `dweight`/`dbias`; writes `dx` when non-null.
template <typename T>
void conv3d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, int ksize,
                     std::span<T> dweight, std::span<T> dbias, Tensor<T>* dx);

template <typename T>
void leaky_relu_forward(Tensor<T>& x, T slope);
/// `y` is the forward output; its sign selects the slope.
template <typename T>
void leaky_relu_backward(const Tensor<T>& y, Tensor<T>& dy, T slope);

/// Inverted dropout. Returns the per-element multiplier (0 or 1/(1-rate)).
template <typename T>
std::vector<T> dropout_forward(Tensor<T>& x, double rate, std::mt19937_64& rng);
template <typename T>
void apply_multiplier(Tensor<T>& t, const std::vector<T>& mult);

/// 2x2x2 max pooling, stride 2. `argmax` receives the winning offset (0..7) per output.
template <typename T>
Tensor<T> max_pool2_forward(const Tensor<T>& x, std::vector<uint8_t>& argmax);
template <typename T>
Tensor<T> max_pool2_backward(const Tensor<T>& dy, const std::vector<uint8_t>& argmax, const Shape3& in_spatial);

/// Trilinear x2 upsampling with half-voxel alignment and edge clamping.
template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Channel-wise softmax per voxel.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);
/// Gradient w.r.t. logits given the softmax output and the gradient w.r.t. it.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& prob, const Tensor<T>& dprob);

}  // namespace mscare::nn
