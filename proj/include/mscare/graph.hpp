#pragma once

#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mscare/parameters.hpp"
#include "mscare/tensor.hpp"

namespace mscare {

/// Reference to one convolution layer inside a ParameterSet.
struct ConvRef {
  int weight = -1;  // shape (cin, k, k, k, cout)
  int bias = -1;    // shape (cout)
  int cin = 0;
  int cout = 0;
  int ksize = 3;
};

/// Records a forward computation so it can be differentiated by reverse
/// traversal. Node ids index the recorded values.
///
/// `leaky_relu` and `dropout` consume their input: the input id must not be
/// used afterwards. When `keep_for_backward` is false, `release` frees values
/// that are no longer needed, bounding memory for inference.
template <typename T>
class Graph {
 public:
  Graph(const ParameterSet<T>& params, bool keep_for_backward) : params_(&params), keep_(keep_for_backward) {}

  int input(Tensor<T> t, bool requires_grad = false);
  int conv(int x, const ConvRef& c);
  int leaky_relu(int x, T slope);
  int dropout(int x, double rate, std::mt19937_64& rng);
  int max_pool(int x);
  int upsample(int x);
  int concat(int a, int b);
  /// Places channel i of x at channel target[i] of a zero tensor with `total` channels.
  int scatter_channels(int x, std::vector<int> target, int total);

  const Tensor<T>& value(int id) const;
  Tensor<T> take(int id);
  void release(int id);

  /// Back-propagates the given output gradients; parameter gradients are
  /// accumulated into `grads` (same structure as the forward parameters).
  void backward(std::vector<std::pair<int, Tensor<T>>> seeds, ParameterSet<T>& grads);

  /// Gradient w.r.t. an input node after backward(); empty if none flowed.
  const Tensor<T>& input_grad(int id) const { return grads_.at(id); }

 private:
  enum class Op { Input, Conv, Leaky, Dropout, MaxPool, Upsample, Concat, Scatter };
  struct Node {
    Op op = Op::Input;
    std::vector<int> in;
    ConvRef conv;
    T slope = 0;
    std::vector<T> mult;           // dropout multipliers
    std::vector<uint8_t> bytes;    // pooling argmax / leaky sign
    std::vector<int> channel_map;  // scatter target, or concat split
    Shape3 in_spatial{0, 0, 0};
    bool requires_grad = false;
  };

  int push(Node n, Tensor<T> v);
  void accumulate(int id, Tensor<T> g);

  const ParameterSet<T>* params_;
  bool keep_;
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> values_;
  std::vector<bool> consumed_;
  std::vector<Tensor<T>> grads_;
};

}  // namespace mscare
