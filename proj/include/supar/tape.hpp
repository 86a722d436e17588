// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "supar/tensor.hpp"

namespace supar {

enum class Primitive {
  kMatMul,        // [..., m, k] x [k, n] or [..., k, n] with equal leading axes
  kAdd,           // same shape, or one operand matches the other's trailing axes
  kMul,           // elementwise, same broadcasting rule as kAdd
  kScale,         // attrs.scalar * x
  kSilu,
  kSoftmax,       // last axis
  kLayerNorm,     // inputs {x, gain}; last axis; attrs.eps
  kEmbedding,     // inputs {weight [V, d]}; attrs.indices, attrs.shape = index shape
  kTranspose,     // swap last two axes
  kCrossEntropy,  // inputs {logits [..., V]}; attrs.indices = targets; mean over rows
  kCausalBias,    // inputs {scores [B, H, T, T]}; attrs.values = per-head slopes
  kReshape,       // attrs.shape
  kSwapAxes12,    // [a, b, c, d] -> [a, c, b, d]
  kSum,           // reduce all elements to a scalar
};

std::string_view primitive_name(Primitive kind);
/// Parses a primitive name as printed by primitive_name; throws UnsupportedPrimitive.
Primitive primitive_from_name(std::string_view name);

struct PrimitiveAttrs {
  double scalar = 1.0;
  double eps = 1e-5;
  Shape shape;
  std::vector<std::int64_t> indices;
  std::vector<double> values;
};

/// Define-by-run record of primitive applications.
///
/// Entries are appended in execution order, so every operand of entry k is
/// either a leaf or the output of an earlier entry. Rebuild the tape for each
/// forward pass.
template <std::floating_point T>
class Tape {
 public:
  struct Entry {
    Primitive kind;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    PrimitiveAttrs attrs;
    std::vector<T> saved;
  };

  Tensor<T> apply(Primitive kind, std::vector<Tensor<T>> inputs, PrimitiveAttrs attrs = {});

  /// Populates d(loss)/d(x) on every requires_grad tensor recorded on the
  /// tape; tensors that do not reach the loss receive zeros.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

extern template class Tape<float>;
extern template class Tape<double>;
extern template class Tape<long double>;

}  // namespace supar
