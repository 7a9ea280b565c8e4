#include "mscare/graph.hpp"

#include "mscare/kernels.hpp"

namespace mscare {

template <typename T>
int Graph<T>::push(Node n, Tensor<T> v) {
  nodes_.push_back(std::move(n));
  values_.push_back(std::move(v));
  consumed_.push_back(false);
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
const Tensor<T>& Graph<T>::value(int id) const {
  if (id < 0 || id >= static_cast<int>(values_.size())) throw Error("graph node id out of range");
  if (consumed_[id]) throw Error("graph value was consumed by an in-place operation");
  return values_[id];
}

template <typename T>
Tensor<T> Graph<T>::take(int id) {
  value(id);
  consumed_[id] = true;
  return std::move(values_[id]);
}

template <typename T>
void Graph<T>::release(int id) {
  if (keep_) return;
  values_.at(id) = Tensor<T>{};
  consumed_[id] = true;
}

template <typename T>
int Graph<T>::input(Tensor<T> t, bool requires_grad) {
  Node n;
  n.op = Op::Input;
  n.requires_grad = requires_grad;
  return push(std::move(n), std::move(t));
}

template <typename T>
int Graph<T>::conv(int x, const ConvRef& c) {
  const Tensor<T>& in = value(x);
  if (in.channels() != c.cin) {
    throw Error("convolution expects " + std::to_string(c.cin) + " input channels, got " + std::to_string(in.channels()));
  }
  const auto& w = params_->values.at(c.weight);
  const auto& b = params_->values.at(c.bias);
  Tensor<T> out = nn::conv3d_forward<T>(in, w, b, c.cout, c.ksize);
  Node n;
  n.op = Op::Conv;
  n.in = {x};
  n.conv = c;
  n.requires_grad = true;
  return push(std::move(n), std::move(out));
}

template <typename T>
int Graph<T>::leaky_relu(int x, T slope) {
  Tensor<T> t = take(x);
  nn::leaky_relu_forward(t, slope);
  Node n;
  n.op = Op::Leaky;
  n.in = {x};
  n.slope = slope;
  n.requires_grad = nodes_[x].requires_grad;
  if (keep_ && n.requires_grad) {
    n.bytes.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) n.bytes[i] = t.data[i] > T(0);
  }
  return push(std::move(n), std::move(t));
}

template <typename T>
int Graph<T>::dropout(int x, double rate, std::mt19937_64& rng) {
  Tensor<T> t = take(x);
  Node n;
  n.op = Op::Dropout;
  n.in = {x};
  n.mult = nn::dropout_forward(t, rate, rng);
  n.requires_grad = nodes_[x].requires_grad;
  if (!keep_) n.mult.clear();
  return push(std::move(n), std::move(t));
}

template <typename T>
int Graph<T>::max_pool(int x) {
  Node n;
  n.op = Op::MaxPool;
  n.in = {x};
  n.in_spatial = value(x).spatial();
  Tensor<T> out = nn::max_pool2_forward(value(x), n.bytes);
  n.requires_grad = nodes_[x].requires_grad;
  if (!keep_) n.bytes.clear();
  return push(std::move(n), std::move(out));
}

template <typename T>
int Graph<T>::upsample(int x) {
  Node n;
  n.op = Op::Upsample;
  n.in = {x};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n), nn::upsample2_forward(value(x)));
}

template <typename T>
int Graph<T>::concat(int a, int b) {
  Node n;
  n.op = Op::Concat;
  n.in = {a, b};
  n.channel_map = {value(a).channels()};
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n), nn::concat_channels(value(a), value(b)));
}

template <typename T>
int Graph<T>::scatter_channels(int x, std::vector<int> target, int total) {
  const Tensor<T>& in = value(x);
  if (static_cast<int>(target.size()) != in.channels()) throw Error("scatter map does not match the channel count");
  Tensor<T> out(total, in.spatial());
  for (int c = 0; c < in.channels(); ++c) {
    if (target[c] < 0 || target[c] >= total) throw Error("scatter target channel out of range");
    std::copy(in.channel(c), in.channel(c) + in.channel_size(), out.channel(target[c]));
  }
  Node n;
  n.op = Op::Scatter;
  n.in = {x};
  n.channel_map = std::move(target);
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n), std::move(out));
}

template <typename T>
void Graph<T>::accumulate(int id, Tensor<T> g) {
  if (!nodes_[id].requires_grad) return;
  Tensor<T>& dst = grads_[id];
  if (dst.data.empty()) {
    dst = std::move(g);
    return;
  }
  if (dst.shape != g.shape) throw Error("gradient shape mismatch during backward");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
}

template <typename T>
void Graph<T>::backward(std::vector<std::pair<int, Tensor<T>>> seeds, ParameterSet<T>& grads) {
  if (!keep_) throw Error("backward requires a graph recorded with keep_for_backward");
  if (!grads.same_structure(*params_)) throw Error("gradient set does not match the parameters");
  grads_.assign(nodes_.size(), Tensor<T>{});
  for (auto& [id, g] : seeds) {
    if (g.shape != values_.at(id).shape) throw Error("seed gradient shape mismatch");
    accumulate(id, std::move(g));
  }

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    if (grads_[id].data.empty() || n.op == Op::Input) continue;
    Tensor<T> g = std::move(grads_[id]);
    grads_[id] = Tensor<T>{};
    switch (n.op) {
      case Op::Input:
        break;
      case Op::Conv: {
        const int x = n.in[0];
        const auto& w = params_->values[n.conv.weight];
        Tensor<T> dx;
        const bool need_dx = nodes_[x].requires_grad;
        nn::conv3d_backward<T>(values_[x], w, g, n.conv.ksize, grads.values[n.conv.weight], grads.values[n.conv.bias],
                               need_dx ? &dx : nullptr);
        if (need_dx) accumulate(x, std::move(dx));
        break;
      }
      case Op::Leaky:
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!n.bytes[i]) g.data[i] *= n.slope;
        }
        accumulate(n.in[0], std::move(g));
        break;
      case Op::Dropout:
        nn::apply_multiplier(g, n.mult);
        accumulate(n.in[0], std::move(g));
        break;
      case Op::MaxPool:
        accumulate(n.in[0], nn::max_pool2_backward(g, n.bytes, n.in_spatial));
        break;
      case Op::Upsample:
        accumulate(n.in[0], nn::upsample2_backward(g));
        break;
      case Op::Concat: {
        const int ca = n.channel_map[0];
        Tensor<T> ga(ca, g.spatial());
        Tensor<T> gb(g.channels() - ca, g.spatial());
        std::copy(g.data.begin(), g.data.begin() + ga.size(), ga.data.begin());
        std::copy(g.data.begin() + ga.size(), g.data.end(), gb.data.begin());
        accumulate(n.in[0], std::move(ga));
        accumulate(n.in[1], std::move(gb));
        break;
      }
      case Op::Scatter: {
        const int cin = static_cast<int>(n.channel_map.size());
        Tensor<T> gx(cin, g.spatial());
        for (int c = 0; c < cin; ++c) {
          std::copy(g.channel(n.channel_map[c]), g.channel(n.channel_map[c]) + g.channel_size(), gx.channel(c));
        }
        accumulate(n.in[0], std::move(gx));
        break;
      }
    }
  }
  // Keep gradients of inputs only.
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].op != Op::Input) grads_[id] = Tensor<T>{};
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace mscare
