#include "mscare/optimizer.hpp"

#include <cmath>

namespace mscare {

void adam_step(ParameterSet<float>& params, const ParameterSet<float>& grads, AdamState& state, const AdamConfig& cfg) {
  if (!grads.same_structure(params) || !state.m.same_structure(params) || !state.v.same_structure(params)) {
    throw Error("Adam: gradient or moment structure does not match the parameters");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double lr = cfg.learning_rate;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params.values[t];
    const auto& g = grads.values[t];
    auto& m = state.m.values[t];
    auto& v = state.v.values[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / c1;
      const double vhat = vi / c2;
      p[i] = static_cast<float>(p[i] - lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
}

template <typename T>
void ema_update(ParameterSet<T>& ema, const ParameterSet<T>& current, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw Error("EMA decay must lie in [0, 1)");
  if (!ema.same_structure(current)) throw Error("EMA: parameter structure mismatch");
  if (decay == 0.0) {
    ema.values = current.values;
    return;
  }
  for (std::size_t t = 0; t < ema.size(); ++t) {
    auto& e = ema.values[t];
    const auto& c = current.values[t];
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = static_cast<T>(decay * e[i] + (1.0 - decay) * c[i]);
  }
}

template void ema_update(ParameterSet<float>&, const ParameterSet<float>&, double);
template void ema_update(ParameterSet<double>&, const ParameterSet<double>&, double);

}  // namespace mscare
