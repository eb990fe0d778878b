#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gaid/model.hpp"
#include "gaid/tensor.hpp"

// Adam with bias correction, two learning-rate groups (inherited projections
// vs new modules) and decoupled weight decay on projection and attention
// matrices only.

namespace gaid {

struct AdamConfig {
  double lr_new = 1e-4;
  double lr_proj = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;
};

template <typename T>
AdamState<T> init_adam_state(const ModelParams<T>& params) {
  AdamState<T> s;
  auto refs = param_refs(const_cast<ModelParams<T>&>(params));
  for (const auto& r : refs) {
    s.m.emplace_back(r.tensor->shape());
    s.v.emplace_back(r.tensor->shape());
  }
  return s;
}

template <typename T>
void adam_step(ModelParams<T>& params, const GradBundle<T>& grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  auto prefs = param_refs(params);
  auto grefs = param_refs(const_cast<GradBundle<T>&>(grads));
  if (prefs.size() != grefs.size() || state.m.size() != prefs.size())
    throw ShapeError("adam_step: parameter/gradient/state layout mismatch");
  state.step += 1;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T bc1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.step)));
  const T bc2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.step)));
  for (std::size_t k = 0; k < prefs.size(); ++k) {
    Tensor<T>& p = *prefs[k].tensor;
    const Tensor<T>& g = *grefs[k].tensor;
    Tensor<T>& m = state.m[k];
    Tensor<T>& v = state.v[k];
    const T lr = static_cast<T>(prefs[k].projection_group ? cfg.lr_proj : cfg.lr_new);
    const T decay = prefs[k].decay ? static_cast<T>(cfg.weight_decay) : T(0);
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = m[i] / bc1;
      const T v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + static_cast<T>(cfg.eps));
      if (decay != T(0)) p[i] -= lr * decay * p[i];
    }
  }
}

}  // namespace gaid
