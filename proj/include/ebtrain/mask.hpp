#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "ebtrain/errors.hpp"
#include "ebtrain/io.hpp"
#include "ebtrain/network.hpp"

namespace ebt {

/// Ticket mask over all prunable channels: 1 keeps a channel, 0 prunes it.
struct ChannelMask {
  std::vector<std::uint8_t> bits;
  double ratio = 0.0;  // target pruning ratio p this mask was drawn at
  int source_epoch = 0;

  std::size_t size() const { return bits.size(); }

  std::size_t zeros() const {
    std::size_t n = 0;
    for (std::uint8_t b : bits) n += (b == 0);
    return n;
  }

  bool same_bits(const ChannelMask& other) const { return bits == other.bits; }
};

/// One prunable channel: its global index, owning conv layer, and |gamma|.
struct GammaEntry {
  int global = 0;
  int layer = 0;
  double value = 0.0;
};

/// Flattens |gamma| of every BN channel in layer order. The global index of
/// entry i is i; the layer field drives the per-layer pruning floor.
template <typename T>
inline std::vector<GammaEntry> extract_gammas(const Network<T>& net) {
  std::vector<GammaEntry> out;
  out.reserve(static_cast<std::size_t>(net.total_channels));
  int layer_id = 0;
  for (std::size_t li : net.conv_layers) {
    const auto& cb = std::get<ConvBnReluLayer<T>>(net.layers[li]);
    for (int c = 0; c < cb.cfg.out_channels; ++c) {
      out.push_back({cb.channel_offset + c, layer_id, std::abs(static_cast<double>(cb.gamma[c]))});
    }
    ++layer_id;
  }
  return out;
}

/// Prunes the round(p*C) globally smallest |gamma| channels. A layer is never
/// reduced below `per_layer_floor` channels: when pruning would do so, the
/// layer's largest-|gamma| channels survive and the next-smallest global
/// candidates are pruned instead. Ties break toward the smaller
/// (layer, channel) position.
inline ChannelMask compute_mask(const std::vector<GammaEntry>& gammas, double p, int per_layer_floor = 1) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("compute_mask: pruning ratio must be in (0,1)");
  if (per_layer_floor < 1) throw ConfigError("compute_mask: per-layer floor must be >= 1");
  const std::size_t c_total = gammas.size();

  ChannelMask mask;
  mask.ratio = p;
  mask.bits.assign(c_total, 1);
  if (c_total == 0) return mask;

  int max_layer = 0;
  std::vector<std::uint8_t> seen(c_total, 0);
  for (const auto& e : gammas) {
    if (e.global < 0 || static_cast<std::size_t>(e.global) >= c_total || seen[e.global]) {
      throw DimensionError("compute_mask: global channel indices must be a permutation of 0..C-1");
    }
    seen[e.global] = 1;
    max_layer = std::max(max_layer, e.layer);
  }

  std::vector<std::size_t> order(c_total);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (gammas[a].value != gammas[b].value) return gammas[a].value < gammas[b].value;
    return gammas[a].global < gammas[b].global;
  });

  std::vector<int> unpruned(static_cast<std::size_t>(max_layer) + 1, 0);
  for (const auto& e : gammas) ++unpruned[e.layer];

  const long target = std::lround(p * static_cast<double>(c_total));
  long pruned = 0;
  for (std::size_t idx : order) {
    if (pruned >= target) break;
    const GammaEntry& e = gammas[idx];
    if (unpruned[e.layer] <= per_layer_floor) continue;  // floor: keep the layer's largest survivors
    mask.bits[e.global] = 0;
    --unpruned[e.layer];
    ++pruned;
  }
  return mask;
}

/// Hamming distance between two ticket masks, normalized by channel count.
inline double mask_distance(const ChannelMask& a, const ChannelMask& b) {
  if (a.size() != b.size()) throw DimensionError("mask_distance: mask lengths differ");
  if (a.ratio != b.ratio) throw DimensionError("mask_distance: masks drawn at different pruning ratios");
  if (a.size() == 0) return 0.0;
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) diff += (a.bits[i] != b.bits[i]);
  return static_cast<double>(diff) / static_cast<double>(a.size());
}

enum class NormalizeMode {
  PerPair,       // Hamming / C_total; the scale the detector threshold lives on
  MatrixMinMax,  // whole matrix linearly rescaled to [0,1]; heatmap export only
};

struct DistanceMatrix {
  int size = 0;
  std::vector<int> epochs;
  std::vector<double> values;  // row-major size x size

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * size + j]; }
};

inline DistanceMatrix distance_matrix(const std::vector<ChannelMask>& masks, NormalizeMode mode) {
  if (masks.size() < 2) throw DimensionError("distance_matrix: need at least 2 masks");
  DistanceMatrix m;
  m.size = static_cast<int>(masks.size());
  m.epochs.reserve(masks.size());
  for (const auto& mk : masks) m.epochs.push_back(mk.source_epoch);
  m.values.assign(static_cast<std::size_t>(m.size) * m.size, 0.0);
  for (int i = 0; i < m.size; ++i) {
    for (int j = i + 1; j < m.size; ++j) {
      const double d = mask_distance(masks[i], masks[j]);
      m.values[static_cast<std::size_t>(i) * m.size + j] = d;
      m.values[static_cast<std::size_t>(j) * m.size + i] = d;
    }
  }
  if (mode == NormalizeMode::MatrixMinMax) {
    double lo = m.values[0], hi = m.values[0];
    for (double v : m.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = hi - lo;
    for (double& v : m.values) v = span > 0.0 ? (v - lo) / span : 0.0;
  }
  return m;
}

/// Header row of epoch labels, then one row of reals per epoch.
inline std::string distance_matrix_csv(const DistanceMatrix& m) {
  std::string out;
  for (int j = 0; j < m.size; ++j) {
    if (j) out += ',';
    out += std::to_string(m.epochs[j]);
  }
  out += '\n';
  for (int i = 0; i < m.size; ++i) {
    for (int j = 0; j < m.size; ++j) {
      if (j) out += ',';
      out += fmt_float(m.at(i, j));
    }
    out += '\n';
  }
  return out;
}

/// "EBDIST01", E as u32 LE, then E*E float32 LE values row-major.
inline std::string distance_matrix_binary(const DistanceMatrix& m) {
  std::string out = "EBDIST01";
  append_u32_le(out, static_cast<std::uint32_t>(m.size));
  for (double v : m.values) {
    const float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    append_u32_le(out, u);
  }
  return out;
}

inline DistanceMatrix distance_matrix_from_binary(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 8, "EBDIST01") != 0) {
    throw DataError("distance matrix: bad magic");
  }
  DistanceMatrix m;
  m.size = static_cast<int>(read_u32_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 8));
  const std::size_t want = 12 + static_cast<std::size_t>(m.size) * m.size * 4;
  if (bytes.size() != want) throw DataError("distance matrix: truncated payload");
  m.values.resize(static_cast<std::size_t>(m.size) * m.size);
  m.epochs.assign(static_cast<std::size_t>(m.size), 0);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const std::uint32_t u = read_u32_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 12 + i * 4);
    float f;
    std::memcpy(&f, &u, 4);
    m.values[i] = static_cast<double>(f);
  }
  return m;
}

}  // namespace ebt
