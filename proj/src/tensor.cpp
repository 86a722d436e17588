// SPDX-License-Identifier: Apache-2.0
#include "supar/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "supar/errors.hpp"

namespace supar {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <std::floating_point T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  for (auto extent : shape) {
    if (extent == 0) throw ContractViolation("tensor extents must be >= 1, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ContractViolation("tensor shape " + shape_str(shape) + " does not match data length " +
                            std::to_string(data.size()));
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <std::floating_point T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <std::floating_point T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <std::floating_point T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <std::floating_point T>
const Shape& Tensor<T>::shape() const {
  if (!impl_) throw ContractViolation("use of undefined tensor");
  return impl_->shape;
}

template <std::floating_point T>
std::size_t Tensor<T>::numel() const {
  if (!impl_) throw ContractViolation("use of undefined tensor");
  return impl_->data.size();
}

template <std::floating_point T>
std::span<const T> Tensor<T>::data() const {
  if (!impl_) throw ContractViolation("use of undefined tensor");
  return impl_->data;
}

template <std::floating_point T>
std::span<T> Tensor<T>::mutable_data() {
  if (!impl_) throw ContractViolation("use of undefined tensor");
  if (impl_->frozen) throw ContractViolation("tensor produced by a primitive is immutable");
  return impl_->data;
}

template <std::floating_point T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractViolation("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <std::floating_point T>
bool Tensor<T>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <std::floating_point T>
void Tensor<T>::set_requires_grad(bool flag) {
  if (!impl_) throw ContractViolation("use of undefined tensor");
  impl_->requires_grad = flag;
}

template <std::floating_point T>
bool Tensor<T>::has_grad() const {
  return impl_ && !impl_->grad.empty();
}

template <std::floating_point T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw ContractViolation("tensor has no gradient");
  return impl_->grad;
}

template <std::floating_point T>
std::span<T> Tensor<T>::mutable_grad() {
  if (!has_grad()) throw ContractViolation("tensor has no gradient");
  return impl_->grad;
}

template <std::floating_point T>
void Tensor<T>::zero_grad() {
  if (!impl_) throw ContractViolation("use of undefined tensor");
  impl_->grad.assign(impl_->data.size(), T(0));
}

template <std::floating_point T>
void Tensor<T>::clear_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

template <std::floating_point T>
bool Tensor<T>::is_leaf() const {
  return impl_ && !impl_->frozen;
}

template <std::floating_point T>
Tensor<T> Tensor<T>::detach_copy() const {
  return Tensor(shape(), std::vector<T>(impl_->data), false);
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<long double>;

}  // namespace supar
