#pragma once

#include <cstdint>
#include <vector>

#include "ebtrain/mask.hpp"
#include "ebtrain/network.hpp"

namespace ebt {

enum class WeightMode { Inherit, Reinit };

namespace detail {

/// Surviving local channel indices of each conv layer under the mask.
template <typename T>
inline std::vector<std::vector<int>> surviving_channels(const Network<T>& net, const ChannelMask& mask) {
  if (mask.size() != static_cast<std::size_t>(net.total_channels)) {
    throw DimensionError("apply_mask: mask length does not match network channel count");
  }
  std::vector<std::vector<int>> keep;
  for (std::size_t li : net.conv_layers) {
    const auto& cb = std::get<ConvBnReluLayer<T>>(net.layers[li]);
    std::vector<int> k;
    for (int c = 0; c < cb.cfg.out_channels; ++c) {
      if (mask.bits[static_cast<std::size_t>(cb.channel_offset) + c]) k.push_back(c);
    }
    if (k.empty()) throw DimensionError("apply_mask: mask empties a conv layer");
    keep.push_back(std::move(k));
  }
  return keep;
}

}  // namespace detail

/// Physically removes pruned channels: each conv loses the masked output
/// channels (weights, gamma, beta, running stats) and the consumer of those
/// channels — the next conv's input slices, or the first linear layer's
/// columns after global pooling — shrinks to match. Inherit copies the
/// surviving values from the source network; Reinit draws a fresh
/// initialization for the pruned architecture from `seed`.
template <typename T>
inline Network<T> apply_mask(const Network<T>& net, const ChannelMask& mask, WeightMode mode, std::uint64_t seed) {
  const std::vector<std::vector<int>> keep = detail::surviving_channels(net, mask);

  NetworkSpec pruned_spec = net.spec;
  std::size_t conv_i = 0;
  for (auto& block : pruned_spec.blocks) {
    if (auto* cb = std::get_if<ConvBlockSpec>(&block)) {
      cb->out_channels = static_cast<int>(keep[conv_i].size());
      ++conv_i;
    }
  }

  Network<T> out = build_network<T>(pruned_spec, seed);
  if (mode == WeightMode::Reinit) return out;

  // Inherit: slice the surviving rows/columns out of the source tensors.
  // `in_keep` tracks which input slices of the next consumer survive; empty
  // means "all inputs kept" (network input channels are not prunable).
  std::vector<int> in_keep;
  conv_i = 0;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    if (const auto* src = std::get_if<ConvBnReluLayer<T>>(&net.layers[li])) {
      auto& dst = std::get<ConvBnReluLayer<T>>(out.layers[li]);
      const std::vector<int>& out_keep = keep[conv_i];
      const int k = src->cfg.kernel;
      const int cin_src = src->in_channels;
      std::vector<int> ins = in_keep;
      if (ins.empty()) {
        ins.resize(static_cast<std::size_t>(cin_src));
        for (int c = 0; c < cin_src; ++c) ins[c] = c;
      }
      for (std::size_t co = 0; co < out_keep.size(); ++co) {
        for (std::size_t ci = 0; ci < ins.size(); ++ci) {
          const T* s = src->w.data() + ((static_cast<std::size_t>(out_keep[co]) * cin_src + ins[ci])) * k * k;
          T* d = dst.w.data() + ((co * ins.size() + ci)) * k * k;
          std::copy(s, s + static_cast<std::size_t>(k) * k, d);
        }
        dst.gamma[co] = src->gamma[out_keep[co]];
        dst.beta[co] = src->beta[out_keep[co]];
        dst.running_mean[co] = src->running_mean[out_keep[co]];
        dst.running_var[co] = src->running_var[out_keep[co]];
      }
      dst.bn_momentum = src->bn_momentum;
      dst.bn_eps = src->bn_eps;
      in_keep = out_keep;
      ++conv_i;
    } else if (const auto* src_lin = std::get_if<LinearLayer<T>>(&net.layers[li])) {
      auto& dst = std::get<LinearLayer<T>>(out.layers[li]);
      std::vector<int> ins = in_keep;
      if (ins.empty()) {
        ins.resize(static_cast<std::size_t>(src_lin->in_features));
        for (int c = 0; c < src_lin->in_features; ++c) ins[c] = c;
      }
      const int out_f = src_lin->cfg.out_features;
      for (int o = 0; o < out_f; ++o) {
        const T* s = src_lin->w.data() + static_cast<std::size_t>(o) * src_lin->in_features;
        T* d = dst.w.data() + static_cast<std::size_t>(o) * ins.size();
        for (std::size_t ci = 0; ci < ins.size(); ++ci) d[ci] = s[ins[ci]];
        dst.b[o] = src_lin->b[o];
      }
      in_keep.clear();  // linear output features are not channel-indexed
    }
    // pooling layers carry no parameters and preserve the channel selection
  }
  return out;
}

}  // namespace ebt
