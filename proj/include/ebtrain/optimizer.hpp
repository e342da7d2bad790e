#pragma once

#include <vector>

#include "ebtrain/errors.hpp"
#include "ebtrain/tensor.hpp"

namespace ebt {

enum class ParamKind { ConvWeight, BnGamma, BnBeta, LinearWeight, LinearBias };

/// View of one trainable tensor and its gradient slot.
template <typename T>
struct ParamRef {
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
  ParamKind kind = ParamKind::ConvWeight;
};

/// SGD with momentum. L1 sparsity on BN scaling factors enters as a
/// subgradient sign term, sign(0) = 0.
template <typename T>
struct SgdState {
  T lr = T(0.1);
  T momentum = T(0.9);
  T weight_decay = T(1e-4);
  std::vector<Tensor<T>> velocity;  // aligned with the parameter list

  void init(const std::vector<ParamRef<T>>& params) {
    velocity.clear();
    velocity.reserve(params.size());
    for (const auto& p : params) velocity.emplace_back(p.value->shape());
  }
};

/// v <- momentum*v + (grad + wd*param [+ l1*sign(gamma)]); param <- param - lr*v.
template <typename T>
inline void sgd_step(std::vector<ParamRef<T>>& params, SgdState<T>& state, T l1_gamma_coeff) {
  if (state.lr < T(0)) throw ConfigError("sgd_step: learning rate must be >= 0");
  if (l1_gamma_coeff < T(0)) throw ConfigError("sgd_step: l1 coefficient must be >= 0");
  if (state.velocity.size() != params.size()) throw DimensionError("sgd_step: optimizer state not initialized");
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& value = *params[pi].value;
    const Tensor<T>& grad = *params[pi].grad;
    Tensor<T>& vel = state.velocity[pi];
    if (!vel.same_shape(value) || !grad.same_shape(value)) {
      throw DimensionError("sgd_step: parameter/gradient/velocity shape mismatch");
    }
    const bool is_gamma = params[pi].kind == ParamKind::BnGamma;
    for (std::size_t i = 0; i < value.size(); ++i) {
      T g = grad[i] + state.weight_decay * value[i];
      if (is_gamma && l1_gamma_coeff > T(0)) {
        const T s = value[i] > T(0) ? T(1) : (value[i] < T(0) ? T(-1) : T(0));
        g += l1_gamma_coeff * s;
      }
      vel[i] = state.momentum * vel[i] + g;
      value[i] -= state.lr * vel[i];
    }
    ensure_finite(value, "sgd_step");
  }
}

}  // namespace ebt
