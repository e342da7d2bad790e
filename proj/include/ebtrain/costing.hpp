#pragma once

#include <cstdint>
#include <vector>

#include "ebtrain/network.hpp"

namespace ebt {

/// Per-phase training cost totals plus the per-sample figures they are built
/// from. All counts are exact integers. Simulated low-precision runs are
/// counted identically to full precision.
struct CostReport {
  std::uint64_t dense_forward_per_sample = 0;
  std::uint64_t dense_training_per_sample = 0;
  std::uint64_t pruned_forward_per_sample = 0;
  std::uint64_t pruned_training_per_sample = 0;
  std::uint64_t search_flops = 0;
  std::uint64_t retrain_flops = 0;
  std::uint64_t baseline_train_flops = 0;
  std::uint64_t baseline_retrain_flops = 0;
  std::uint64_t detector_overhead_flops = 0;
  std::uint64_t dense_params = 0;
  std::uint64_t pruned_params = 0;

  std::uint64_t total() const { return search_flops + retrain_flops + baseline_train_flops + baseline_retrain_flops; }
};

/// Forward FLOPs for one sample. Conv: 2*Cout*Hout*Wout*Cin*K^2, linear:
/// 2*in*out, BN: 4*C*H*W, pooling/ReLU: one per output element.
template <typename T>
inline std::uint64_t count_forward_flops(const Network<T>& net) {
  const std::vector<FlowShape> shapes = propagate_shapes(net.spec);
  std::uint64_t flops = 0;
  for (std::size_t i = 0; i < net.spec.blocks.size(); ++i) {
    const FlowShape& in = shapes[i];
    const FlowShape& out = shapes[i + 1];
    if (const auto* cb = std::get_if<ConvBlockSpec>(&net.spec.blocks[i])) {
      const std::uint64_t out_elems = static_cast<std::uint64_t>(out.c) * out.h * out.w;
      flops += 2ull * out_elems * static_cast<std::uint64_t>(in.c) * cb->kernel * cb->kernel;  // conv
      flops += 4ull * out_elems;                                                               // batch norm
      flops += out_elems;                                                                      // relu
    } else if (std::get_if<MaxPoolSpec>(&net.spec.blocks[i])) {
      flops += static_cast<std::uint64_t>(out.c) * out.h * out.w;
    } else if (std::get_if<GlobalAvgPoolSpec>(&net.spec.blocks[i])) {
      flops += static_cast<std::uint64_t>(out.f);
    } else {
      flops += 2ull * static_cast<std::uint64_t>(in.f) * out.f;
    }
  }
  return flops;
}

/// Training FLOPs per sample: forward plus two backward passes of equal cost.
template <typename T>
inline std::uint64_t count_training_flops(const Network<T>& net) {
  return 3ull * count_forward_flops(net);
}

/// Trainable parameters plus nothing else: weights, biases, gamma, beta.
/// Running statistics are excluded.
template <typename T>
inline std::uint64_t count_params(const Network<T>& net) {
  std::uint64_t n = 0;
  for (const auto& layer : net.layers) {
    if (const auto* cb = std::get_if<ConvBnReluLayer<T>>(&layer)) {
      n += cb->w.size() + cb->gamma.size() + cb->beta.size();
    } else if (const auto* ln = std::get_if<LinearLayer<T>>(&layer)) {
      n += ln->w.size() + ln->b.size();
    }
  }
  return n;
}

/// FLOPs charged per epoch for the mask-distance bookkeeping: one gamma
/// extraction, one sort pass, one Hamming comparison. Counted generously as
/// C * (2 + ceil(log2 C)) so the reported overhead is an upper bound.
inline std::uint64_t detector_epoch_flops(int total_channels) {
  if (total_channels <= 0) return 0;
  std::uint64_t lg = 0;
  while ((1ull << lg) < static_cast<std::uint64_t>(total_channels)) ++lg;
  return static_cast<std::uint64_t>(total_channels) * (2 + lg);
}

}  // namespace ebt
