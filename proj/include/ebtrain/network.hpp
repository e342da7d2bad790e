#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "ebtrain/errors.hpp"
#include "ebtrain/ops.hpp"
#include "ebtrain/optimizer.hpp"
#include "ebtrain/rng.hpp"
#include "ebtrain/tensor.hpp"

namespace ebt {

// ---------------------------------------------------------------------------
// Declarative network description
// ---------------------------------------------------------------------------

/// Convolution + BatchNorm + ReLU, fused as one block so that every conv is
/// guaranteed a BN (required for mask extraction). Convs carry no bias; the
/// BN shift absorbs it.
struct ConvBlockSpec {
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};

struct MaxPoolSpec {
  int kernel = 2;
  int stride = 2;
};

struct GlobalAvgPoolSpec {};

struct LinearSpec {
  int out_features = 0;
};

using BlockSpec = std::variant<ConvBlockSpec, MaxPoolSpec, GlobalAvgPoolSpec, LinearSpec>;

struct NetworkSpec {
  int in_channels = 1;
  int in_height = 28;
  int in_width = 28;
  std::vector<BlockSpec> blocks;
  int num_classes = 10;
};

/// Shape of the data flowing between blocks: spatial (C,H,W) or flat (F).
struct FlowShape {
  bool flat = false;
  int c = 0, h = 0, w = 0;  // spatial
  int f = 0;                // flat
};

/// Propagates shapes through the spec, throwing ConfigError on any
/// inconsistency. Returns the input shape of every block plus the final shape.
inline std::vector<FlowShape> propagate_shapes(const NetworkSpec& spec) {
  if (spec.in_channels < 1 || spec.in_height < 1 || spec.in_width < 1) {
    throw ConfigError("network spec: input shape extents must be positive");
  }
  if (spec.blocks.empty()) throw ConfigError("network spec: no blocks");
  std::vector<FlowShape> shapes;
  FlowShape cur{false, spec.in_channels, spec.in_height, spec.in_width, 0};
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    shapes.push_back(cur);
    const std::string where = "network spec block " + std::to_string(i);
    if (const auto* cb = std::get_if<ConvBlockSpec>(&spec.blocks[i])) {
      if (cur.flat) throw ConfigError(where + ": conv needs spatial input");
      if (cb->out_channels < 1 || cb->kernel < 1 || cb->stride < 1 || cb->pad < 0) {
        throw ConfigError(where + ": invalid conv parameters");
      }
      if (cb->kernel > cur.h + 2 * cb->pad || cb->kernel > cur.w + 2 * cb->pad) {
        throw ConfigError(where + ": kernel larger than padded input");
      }
      cur.c = cb->out_channels;
      cur.h = (cur.h + 2 * cb->pad - cb->kernel) / cb->stride + 1;
      cur.w = (cur.w + 2 * cb->pad - cb->kernel) / cb->stride + 1;
    } else if (const auto* mp = std::get_if<MaxPoolSpec>(&spec.blocks[i])) {
      if (cur.flat) throw ConfigError(where + ": maxpool needs spatial input");
      if (mp->kernel < 1 || mp->stride < 1 || mp->kernel > cur.h || mp->kernel > cur.w) {
        throw ConfigError(where + ": invalid pool parameters");
      }
      cur.h = (cur.h - mp->kernel) / mp->stride + 1;
      cur.w = (cur.w - mp->kernel) / mp->stride + 1;
    } else if (std::get_if<GlobalAvgPoolSpec>(&spec.blocks[i])) {
      if (cur.flat) throw ConfigError(where + ": global avgpool needs spatial input");
      cur = FlowShape{true, 0, 0, 0, cur.c};
    } else {
      const auto& ln = std::get<LinearSpec>(spec.blocks[i]);
      if (!cur.flat) throw ConfigError(where + ": linear needs flat input (add global avgpool first)");
      if (ln.out_features < 1) throw ConfigError(where + ": invalid linear out_features");
      cur = FlowShape{true, 0, 0, 0, ln.out_features};
    }
  }
  shapes.push_back(cur);
  if (!cur.flat || !std::holds_alternative<LinearSpec>(spec.blocks.back())) {
    throw ConfigError("network spec: last block must be linear");
  }
  if (cur.f != spec.num_classes) {
    throw ConfigError("network spec: final linear out_features must equal num_classes");
  }
  return shapes;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename T>
struct ConvBnReluLayer {
  ConvBlockSpec cfg;
  int in_channels = 0;
  int channel_offset = 0;  // global index of this layer's first BN channel
  T bn_momentum = T(0.1);
  T bn_eps = T(1e-5);

  Tensor<T> w;  // [cout, cin, k, k]
  Tensor<T> gamma, beta, running_mean, running_var;
  Tensor<T> gw, ggamma, gbeta;

  // training caches
  Tensor<T> in_cache, conv_cache, out_cache;
  BatchStats<T> stats;

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> conv = conv2d_forward(x, w, nullptr, cfg.stride, cfg.pad);
    Tensor<T> bn;
    if (train) {
      bn = batchnorm_train(conv, gamma, beta, running_mean, running_var, bn_momentum, bn_eps, stats);
    } else {
      bn = batchnorm_eval(conv, gamma, beta, running_mean, running_var, bn_eps);
    }
    Tensor<T> out = relu_forward(bn);
    if (train) {
      in_cache = x;
      conv_cache = std::move(conv);
      out_cache = out;
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> g_bn = relu_backward(grad_out, out_cache);
    Tensor<T> g_conv;
    batchnorm_backward(g_bn, conv_cache, gamma, stats, g_conv, ggamma, gbeta);
    Tensor<T> g_in;
    conv2d_backward(g_conv, in_cache, w, cfg.stride, cfg.pad, g_in, gw, nullptr);
    return g_in;
  }
};

template <typename T>
struct MaxPoolLayer {
  MaxPoolSpec cfg;
  std::vector<std::int64_t> argmax;
  std::vector<int> in_shape;

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    std::vector<std::int64_t> am;
    Tensor<T> out = maxpool2d_forward(x, cfg.kernel, cfg.stride, am);
    if (train) {
      argmax = std::move(am);
      in_shape = x.shape();
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) { return maxpool2d_backward(grad_out, in_shape, argmax); }
};

template <typename T>
struct GlobalAvgPoolLayer {
  std::vector<int> in_shape;

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (train) in_shape = x.shape();
    return global_avgpool_forward(x);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) { return global_avgpool_backward(grad_out, in_shape); }
};

template <typename T>
struct LinearLayer {
  LinearSpec cfg;
  int in_features = 0;
  Tensor<T> w;  // [out, in]
  Tensor<T> b;  // [out]
  Tensor<T> gw, gb;
  Tensor<T> in_cache;

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (train) in_cache = x;
    return linear_forward(x, w, &b);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> g_in;
    linear_backward(grad_out, in_cache, w, g_in, gw, &gb);
    return g_in;
  }
};

template <typename T>
using Layer = std::variant<ConvBnReluLayer<T>, MaxPoolLayer<T>, GlobalAvgPoolLayer<T>, LinearLayer<T>>;

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// Optional per-tensor hook applied to activations (forward) or incoming
/// error signals (backward); used by the simulated low-precision mode.
template <typename T>
using TensorHook = std::function<void(Tensor<T>&)>;

template <typename T>
class Network {
 public:
  NetworkSpec spec;
  std::vector<Layer<T>> layers;
  std::vector<std::size_t> conv_layers;  // indices into `layers`
  int total_channels = 0;

  Tensor<T> forward(const Tensor<T>& x, bool train, const TensorHook<T>* hook = nullptr) {
    require_shape(x, {x.dim(0), spec.in_channels, spec.in_height, spec.in_width}, "network forward: input");
    Tensor<T> cur = x;
    for (auto& layer : layers) {
      cur = std::visit([&](auto& l) { return l.forward(cur, train); }, layer);
      if (hook) (*hook)(cur);
    }
    return cur;
  }

  /// Fills the parameter gradients; `hook` is applied to each layer's
  /// incoming error signal before it is consumed.
  void backward(const Tensor<T>& grad_logits, const TensorHook<T>* hook = nullptr) {
    Tensor<T> g = grad_logits;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
      if (hook) (*hook)(g);
      g = std::visit([&](auto& l) { return l.backward(g); }, *it);
    }
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (auto& layer : layers) {
      if (auto* cb = std::get_if<ConvBnReluLayer<T>>(&layer)) {
        out.push_back({&cb->w, &cb->gw, ParamKind::ConvWeight});
        out.push_back({&cb->gamma, &cb->ggamma, ParamKind::BnGamma});
        out.push_back({&cb->beta, &cb->gbeta, ParamKind::BnBeta});
      } else if (auto* ln = std::get_if<LinearLayer<T>>(&layer)) {
        out.push_back({&ln->w, &ln->gw, ParamKind::LinearWeight});
        out.push_back({&ln->b, &ln->gb, ParamKind::LinearBias});
      }
    }
    return out;
  }

  /// Parameters plus BN running statistics, in declaration order; this is the
  /// checkpoint payload order.
  std::vector<Tensor<T>*> state_tensors() {
    std::vector<Tensor<T>*> out;
    for (auto& layer : layers) {
      if (auto* cb = std::get_if<ConvBnReluLayer<T>>(&layer)) {
        out.push_back(&cb->w);
        out.push_back(&cb->gamma);
        out.push_back(&cb->beta);
        out.push_back(&cb->running_mean);
        out.push_back(&cb->running_var);
      } else if (auto* ln = std::get_if<LinearLayer<T>>(&layer)) {
        out.push_back(&ln->w);
        out.push_back(&ln->b);
      }
    }
    return out;
  }

  /// Maps every BN channel to its global prunable-channel index; the ranges
  /// of consecutive conv layers tile 0..total_channels-1.
  std::vector<std::pair<std::size_t, int>> channel_table() const {
    std::vector<std::pair<std::size_t, int>> table;  // (layer index, local channel)
    for (std::size_t li : conv_layers) {
      const auto& cb = std::get<ConvBnReluLayer<T>>(layers[li]);
      for (int c = 0; c < cb.cfg.out_channels; ++c) table.emplace_back(li, c);
    }
    return table;
  }
};

/// Builds and initializes a network. Conv/linear weights draw from
/// U(-sqrt(6/fan_in), +sqrt(6/fan_in)); gamma starts at 0.5, beta and biases
/// at 0, running stats at (0, 1). Identical seeds give bitwise-identical
/// parameters.
template <typename T>
inline Network<T> build_network(const NetworkSpec& spec, std::uint64_t seed) {
  const std::vector<FlowShape> shapes = propagate_shapes(spec);
  Network<T> net;
  net.spec = spec;
  Rng rng(seed);
  int channel_offset = 0;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const FlowShape& in = shapes[i];
    if (const auto* cb = std::get_if<ConvBlockSpec>(&spec.blocks[i])) {
      ConvBnReluLayer<T> layer;
      layer.cfg = *cb;
      layer.in_channels = in.c;
      layer.channel_offset = channel_offset;
      channel_offset += cb->out_channels;
      layer.w = Tensor<T>({cb->out_channels, in.c, cb->kernel, cb->kernel});
      const T bound = static_cast<T>(std::sqrt(6.0 / (static_cast<double>(in.c) * cb->kernel * cb->kernel)));
      for (std::size_t j = 0; j < layer.w.size(); ++j) layer.w[j] = rng.uniform<T>(-bound, bound);
      layer.gamma = Tensor<T>::full({cb->out_channels}, T(0.5));
      layer.beta = Tensor<T>({cb->out_channels});
      layer.running_mean = Tensor<T>({cb->out_channels});
      layer.running_var = Tensor<T>::full({cb->out_channels}, T(1));
      net.conv_layers.push_back(net.layers.size());
      net.layers.emplace_back(std::move(layer));
    } else if (const auto* mp = std::get_if<MaxPoolSpec>(&spec.blocks[i])) {
      MaxPoolLayer<T> layer;
      layer.cfg = *mp;
      net.layers.emplace_back(std::move(layer));
    } else if (std::get_if<GlobalAvgPoolSpec>(&spec.blocks[i])) {
      net.layers.emplace_back(GlobalAvgPoolLayer<T>{});
    } else {
      const auto& ln = std::get<LinearSpec>(spec.blocks[i]);
      LinearLayer<T> layer;
      layer.cfg = ln;
      layer.in_features = in.f;
      layer.w = Tensor<T>({ln.out_features, in.f});
      const T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(in.f)));
      for (std::size_t j = 0; j < layer.w.size(); ++j) layer.w[j] = rng.uniform<T>(-bound, bound);
      layer.b = Tensor<T>({ln.out_features});
      net.layers.emplace_back(std::move(layer));
    }
  }
  net.total_channels = channel_offset;
  return net;
}

// ---------------------------------------------------------------------------
// Reference specs
// ---------------------------------------------------------------------------

/// Four conv blocks for 28x28 single-channel inputs.
inline NetworkSpec conv4_spec(int num_classes = 10) {
  NetworkSpec s;
  s.in_channels = 1;
  s.in_height = 28;
  s.in_width = 28;
  s.num_classes = num_classes;
  s.blocks = {ConvBlockSpec{8, 3, 1, 1},  MaxPoolSpec{2, 2}, ConvBlockSpec{16, 3, 1, 1}, MaxPoolSpec{2, 2},
              ConvBlockSpec{32, 3, 1, 1}, MaxPoolSpec{2, 2}, ConvBlockSpec{32, 3, 1, 1}, GlobalAvgPoolSpec{},
              LinearSpec{num_classes}};
  return s;
}

/// Six conv blocks (32,32,M,64,64,M,128,128) for 32x32 RGB inputs.
inline NetworkSpec vgg_mini_spec(int num_classes = 10) {
  NetworkSpec s;
  s.in_channels = 3;
  s.in_height = 32;
  s.in_width = 32;
  s.num_classes = num_classes;
  s.blocks = {ConvBlockSpec{32, 3, 1, 1},  ConvBlockSpec{32, 3, 1, 1},  MaxPoolSpec{2, 2},
              ConvBlockSpec{64, 3, 1, 1},  ConvBlockSpec{64, 3, 1, 1},  MaxPoolSpec{2, 2},
              ConvBlockSpec{128, 3, 1, 1}, ConvBlockSpec{128, 3, 1, 1}, GlobalAvgPoolSpec{},
              LinearSpec{num_classes}};
  return s;
}

}  // namespace ebt
