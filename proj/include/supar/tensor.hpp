// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <concepts>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace supar {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <std::floating_point T>
class Tape;

/// Dense row-major array with an optional gradient buffer.
///
/// A Tensor is a cheap handle: copies share storage. Values produced by a
/// primitive are frozen; only leaves (parameters, inputs) may be written
/// through `mutable_data()`. A rank-0 shape denotes a scalar.
template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const T> data() const;
  /// Write access for leaves; throws ContractViolation on primitive outputs.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  /// Allocates (if needed) and zero-fills the gradient buffer.
  void zero_grad();
  void clear_grad();

  bool is_leaf() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  /// Deep copy as a fresh leaf (no grad).
  Tensor detach_copy() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    bool frozen = false;
  };

  std::shared_ptr<Impl> impl_;

  friend class Tape<T>;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tensor<long double>;

}  // namespace supar
