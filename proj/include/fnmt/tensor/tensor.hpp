// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fnmt/error.hpp"

namespace fnmt {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major n-dimensional array with an optional gradient buffer.
///
/// A Tensor is a handle: copies share the same storage, so a parameter held
/// by a model and captured by a graph node is one object. Use clone() for an
/// independent deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorStorage<T>>()) {
    check_shape(shape);
    impl_->data.assign(numel(shape), T(0));
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorStorage<T>>()) {
    check_shape(shape);
    if (numel(shape) != data.size()) {
      throw DimensionError("tensor of shape " + to_string(shape) + " needs " +
                           std::to_string(numel(shape)) + " values, got " +
                           std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
  }

  /// Uniform(-bound, bound) fill from the supplied engine.
  template <typename Rng>
  static Tensor uniform(Shape shape, T bound, Rng& rng,
                        bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                                static_cast<double>(bound));
    for (auto& v : t.impl_->data) v = static_cast<T>(dist(rng));
    return t;
  }

  bool defined() const { return static_cast<bool>(impl_); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->data.size(); }

  /// Rows and columns of a rank-2 tensor.
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }

  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }
  T& operator()(std::size_t r, std::size_t c) {
    return impl_->data[r * impl_->shape[1] + c];
  }
  const T& operator()(std::size_t r, std::size_t c) const {
    return impl_->data[r * impl_->shape[1] + c];
  }

  T item() const {
    if (size() != 1) {
      throw DimensionError("item() on tensor of shape " + to_string(shape()));
    }
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }

  /// Allocates a zero gradient buffer if none exists yet. Const because the
  /// buffer belongs to the shared storage, not to the handle.
  std::span<T> ensure_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }
  std::span<T> grad() { return impl_->grad; }
  std::span<const T> grad() const { return impl_->grad; }

  void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), T(0)); }
  void drop_grad() { impl_->grad.clear(); }

  /// Deep copy of shape and data; the copy carries no gradient.
  Tensor clone() const {
    return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
  }

  /// Same data viewed under a different shape of equal element count.
  /// Shares storage; intended for leaf tensors.
  void reshape(Shape shape) {
    if (numel(shape) != size()) {
      throw DimensionError("cannot reshape " + to_string(this->shape()) +
                           " to " + to_string(shape));
    }
    impl_->shape = std::move(shape);
  }

  /// Element-type conversion; used to move parameters between the 32-bit
  /// training path and the 64-bit checking path.
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(impl_->data.begin(), impl_->data.end());
    return Tensor<U>(impl_->shape, std::move(out), impl_->requires_grad);
  }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must be non-empty");
    for (auto d : shape) {
      if (d == 0) {
        throw DimensionError("tensor dimensions must be positive, got " +
                             to_string(shape));
      }
    }
  }

  std::shared_ptr<detail::TensorStorage<T>> impl_;
};

}  // namespace fnmt
