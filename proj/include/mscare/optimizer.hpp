#pragma once

#include <cstdint>

#include "mscare/parameters.hpp"

namespace mscare {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates, same structure as the parameters.
struct AdamState {
  ParameterSet<float> m;
  ParameterSet<float> v;
  int64_t step = 0;

  static AdamState like(const ParameterSet<float>& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update of `params` from `grads`.
void adam_step(ParameterSet<float>& params, const ParameterSet<float>& grads, AdamState& state, const AdamConfig& cfg);

/// ema <- decay * ema + (1 - decay) * current, elementwise.
template <typename T>
void ema_update(ParameterSet<T>& ema, const ParameterSet<T>& current, double decay);

}  // namespace mscare
