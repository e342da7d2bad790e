#pragma once

#include <cmath>

#include "ebtrain/errors.hpp"
#include "ebtrain/tensor.hpp"

namespace ebt {

/// Symmetric uniform quantize-dequantize with a per-tensor scale
/// s = max|x| / (2^(bits-1) - 1). Rounding is half-away-from-zero. All-zero
/// tensors pass through; the operation is exactly idempotent.
template <typename T>
inline void quantize_sim_inplace(Tensor<T>& x, int bits = 8) {
  if (bits < 2) throw ConfigError("quantize_sim: bits must be >= 2");
  const T q_max = static_cast<T>((1 << (bits - 1)) - 1);
  T max_abs = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw NumericError("quantize_sim: non-finite input");
    max_abs = std::max(max_abs, std::abs(x[i]));
  }
  if (max_abs == T(0)) return;
  const T scale = max_abs / q_max;
  for (std::size_t i = 0; i < x.size(); ++i) {
    T q = std::round(x[i] / scale);
    q = std::min(std::max(q, -q_max), q_max);
    x[i] = q * scale;
  }
}

template <typename T>
inline Tensor<T> quantize_sim(const Tensor<T>& x, int bits = 8) {
  Tensor<T> out = x;
  quantize_sim_inplace(out, bits);
  return out;
}

}  // namespace ebt
