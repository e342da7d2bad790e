#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ebtrain/errors.hpp"
#include "ebtrain/io.hpp"
#include "ebtrain/tensor.hpp"

namespace ebt {

/// In-memory labeled image set, stored [n][c][h][w] in float32.
struct Dataset {
  int channels = 0;
  int height = 0;
  int width = 0;
  int num_classes = 10;
  std::vector<float> images;
  std::vector<int> labels;
  std::vector<float> norm_mean, norm_std;  // per-channel constants applied at load (empty: raw [0,1])

  std::size_t size() const { return labels.size(); }
  std::size_t sample_elems() const { return static_cast<std::size_t>(channels) * height * width; }
};

namespace detail {

inline std::uint32_t read_u32_be(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

}  // namespace detail

/// MNIST IDX pair: big-endian magic 0x00000803 (images) / 0x00000801
/// (labels), pixel bytes scaled to [0,1]. `subset` > 0 keeps the first
/// `subset` records.
inline Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                              std::size_t subset = 0) {
  const std::string img = read_file_bytes(images_path);
  const std::string lab = read_file_bytes(labels_path);
  const auto* ip = reinterpret_cast<const unsigned char*>(img.data());
  const auto* lp = reinterpret_cast<const unsigned char*>(lab.data());

  if (img.size() < 16) throw DataError(images_path.string() + ": truncated IDX header at byte offset " + std::to_string(img.size()));
  if (detail::read_u32_be(ip) != 0x00000803u) {
    throw DataError(images_path.string() + ": bad IDX magic at byte offset 0");
  }
  const std::size_t n = detail::read_u32_be(ip + 4);
  const std::size_t rows = detail::read_u32_be(ip + 8);
  const std::size_t cols = detail::read_u32_be(ip + 12);
  if (img.size() != 16 + n * rows * cols) {
    throw DataError(images_path.string() + ": image payload length mismatch at byte offset " + std::to_string(img.size()));
  }

  if (lab.size() < 8) throw DataError(labels_path.string() + ": truncated IDX header at byte offset " + std::to_string(lab.size()));
  if (detail::read_u32_be(lp) != 0x00000801u) {
    throw DataError(labels_path.string() + ": bad IDX magic at byte offset 0");
  }
  if (detail::read_u32_be(lp + 4) != n || lab.size() != 8 + n) {
    throw DataError(labels_path.string() + ": label count mismatch at byte offset " + std::to_string(lab.size()));
  }

  std::size_t take = subset == 0 ? n : subset;
  if (take > n) throw DataError(images_path.string() + ": subset larger than dataset (" + std::to_string(n) + ")");

  Dataset ds;
  ds.channels = 1;
  ds.height = static_cast<int>(rows);
  ds.width = static_cast<int>(cols);
  ds.images.resize(take * rows * cols);
  ds.labels.resize(take);
  for (std::size_t i = 0; i < take * rows * cols; ++i) ds.images[i] = static_cast<float>(ip[16 + i]) / 255.0f;
  for (std::size_t i = 0; i < take; ++i) {
    const int label = lp[8 + i];
    if (label > 9) throw DataError(labels_path.string() + ": label out of range at byte offset " + std::to_string(8 + i));
    ds.labels[i] = label;
  }
  return ds;
}

struct ChannelStats {
  std::vector<float> mean, stddev;
};

/// CIFAR-10 binary batches: 3073-byte records (label byte + 3072 channel-major
/// RGB pixels). Pixels are scaled to [0,1] and then normalized per channel;
/// the constants come from the loaded split unless `stats` is supplied (pass
/// the training-split stats when loading a test split).
inline Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& files, std::size_t subset = 0,
                                const ChannelStats* stats = nullptr) {
  constexpr std::size_t kRecord = 3073;
  constexpr std::size_t kPixels = 3072;
  Dataset ds;
  ds.channels = 3;
  ds.height = 32;
  ds.width = 32;
  for (const auto& file : files) {
    const std::string bytes = read_file_bytes(file);
    if (bytes.empty() || bytes.size() % kRecord != 0) {
      throw DataError(file.string() + ": length not a multiple of 3073 at byte offset " + std::to_string(bytes.size()));
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size() / kRecord;
    for (std::size_t r = 0; r < n; ++r) {
      const unsigned char* rec = p + r * kRecord;
      if (rec[0] > 9) throw DataError(file.string() + ": label out of range at byte offset " + std::to_string(r * kRecord));
      ds.labels.push_back(rec[0]);
      for (std::size_t i = 0; i < kPixels; ++i) ds.images.push_back(static_cast<float>(rec[1 + i]) / 255.0f);
      if (subset > 0 && ds.labels.size() == subset) break;
    }
    if (subset > 0 && ds.labels.size() == subset) break;
  }
  if (subset > 0 && ds.labels.size() < subset) {
    throw DataError("cifar10: subset larger than dataset (" + std::to_string(ds.labels.size()) + ")");
  }

  ChannelStats used;
  if (stats) {
    used = *stats;
  } else {
    used.mean.assign(3, 0.0f);
    used.stddev.assign(3, 0.0f);
    const std::size_t n = ds.labels.size();
    const std::size_t plane = 1024;
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const float* px = ds.images.data() + i * kPixels + c * plane;
        for (std::size_t j = 0; j < plane; ++j) sum += px[j];
      }
      const double mean = n ? sum / static_cast<double>(n * plane) : 0.0;
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const float* px = ds.images.data() + i * kPixels + c * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          const double d = px[j] - mean;
          var += d * d;
        }
      }
      var = n ? var / static_cast<double>(n * plane) : 1.0;
      used.mean[c] = static_cast<float>(mean);
      used.stddev[c] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
    }
  }
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      float* px = ds.images.data() + i * kPixels + static_cast<std::size_t>(c) * 1024;
      for (std::size_t j = 0; j < 1024; ++j) px[j] = (px[j] - used.mean[c]) / used.stddev[c];
    }
  }
  ds.norm_mean = used.mean;
  ds.norm_std = used.stddev;
  return ds;
}

/// Copies the samples at `indices[begin..begin+count)` into a batch tensor.
inline Tensor<float> make_batch(const Dataset& ds, const std::vector<int>& indices, std::size_t begin,
                                std::size_t count, std::vector<int>& labels_out) {
  Tensor<float> batch({static_cast<int>(count), ds.channels, ds.height, ds.width});
  labels_out.resize(count);
  const std::size_t elems = ds.sample_elems();
  for (std::size_t i = 0; i < count; ++i) {
    const int idx = indices[begin + i];
    std::copy(ds.images.data() + idx * elems, ds.images.data() + (idx + 1) * elems, batch.data() + i * elems);
    labels_out[i] = ds.labels[idx];
  }
  return batch;
}

/// Splits sample indices into (train, validation), validation being the last
/// `val_fraction` of the set.
inline std::pair<std::vector<int>, std::vector<int>> split_train_val(const Dataset& ds, double val_fraction) {
  const std::size_t n = ds.size();
  std::size_t val_n = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  if (val_n >= n) val_n = n > 1 ? n - 1 : 0;
  std::vector<int> train, val;
  for (std::size_t i = 0; i < n - val_n; ++i) train.push_back(static_cast<int>(i));
  for (std::size_t i = n - val_n; i < n; ++i) val.push_back(static_cast<int>(i));
  return {std::move(train), std::move(val)};
}

}  // namespace ebt
