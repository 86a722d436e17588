// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "supar/tape.hpp"

/// Thin named wrappers over Tape::apply.
namespace supar::ops {

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return tape.apply(Primitive::kMatMul, {a, b});
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return tape.apply(Primitive::kAdd, {a, b});
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return tape.apply(Primitive::kMul, {a, b});
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, double factor) {
  PrimitiveAttrs attrs;
  attrs.scalar = factor;
  return tape.apply(Primitive::kScale, {x}, std::move(attrs));
}

template <typename T>
Tensor<T> silu(Tape<T>& tape, const Tensor<T>& x) {
  return tape.apply(Primitive::kSilu, {x});
}

template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x) {
  return tape.apply(Primitive::kSoftmax, {x});
}

template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, double eps = 1e-5) {
  PrimitiveAttrs attrs;
  attrs.eps = eps;
  return tape.apply(Primitive::kLayerNorm, {x, gain}, std::move(attrs));
}

template <typename T>
Tensor<T> embedding(Tape<T>& tape, const Tensor<T>& weight, std::span<const std::int64_t> ids, Shape id_shape) {
  PrimitiveAttrs attrs;
  attrs.indices.assign(ids.begin(), ids.end());
  attrs.shape = std::move(id_shape);
  return tape.apply(Primitive::kEmbedding, {weight}, std::move(attrs));
}

template <typename T>
Tensor<T> transpose(Tape<T>& tape, const Tensor<T>& x) {
  return tape.apply(Primitive::kTranspose, {x});
}

template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::int64_t> targets) {
  PrimitiveAttrs attrs;
  attrs.indices.assign(targets.begin(), targets.end());
  return tape.apply(Primitive::kCrossEntropy, {logits}, std::move(attrs));
}

template <typename T>
Tensor<T> causal_bias(Tape<T>& tape, const Tensor<T>& scores, std::span<const double> slopes) {
  PrimitiveAttrs attrs;
  attrs.values.assign(slopes.begin(), slopes.end());
  return tape.apply(Primitive::kCausalBias, {scores}, std::move(attrs));
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  PrimitiveAttrs attrs;
  attrs.shape = std::move(shape);
  return tape.apply(Primitive::kReshape, {x}, std::move(attrs));
}

template <typename T>
Tensor<T> swap_axes12(Tape<T>& tape, const Tensor<T>& x) {
  return tape.apply(Primitive::kSwapAxes12, {x});
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  return tape.apply(Primitive::kSum, {x});
}

}  // namespace supar::ops
