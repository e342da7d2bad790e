#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ebtrain/errors.hpp"

namespace ebt {

/// Dense row-major tensor. The scalar type is a template parameter: float is
/// the training precision, double is used by the finite-difference checks.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (int e : shape_) {
      if (e <= 0) throw DimensionError("tensor extents must be positive");
      n *= static_cast<std::size_t>(e);
    }
    data_.assign(n, T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    std::size_t n = 1;
    for (int e : shape_) n *= static_cast<std::size_t>(e);
    if (n != data_.size()) throw DimensionError("tensor data length does not match shape");
  }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_[i]; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  T max_abs() const {
    T m = T(0);
    for (T v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ']';
    return os.str();
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

/// Postcondition check used by every forward/backward op: NaN/Inf is an error.
template <typename T>
inline void ensure_finite(const Tensor<T>& t, const char* op) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      throw NumericError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

template <typename T>
inline void require_shape(const Tensor<T>& t, const std::vector<int>& shape, const char* what) {
  if (t.shape() != shape) {
    throw DimensionError(std::string(what) + ": expected shape does not match " + t.shape_str());
  }
}

}  // namespace ebt
