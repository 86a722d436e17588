// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "supar/tape.hpp"

namespace supar {

/// Builds a scalar loss from leaf inputs on a fresh tape.
template <typename T>
using LossBuilder = std::function<Tensor<T>(Tape<T>&, std::span<const Tensor<T>>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences over every
/// input element. The relative error of one element is
/// |a - n| / max(|a|, |n|, 1e-12).
template <typename T>
GradCheckResult grad_check_detailed(const LossBuilder<T>& builder, std::vector<Tensor<T>> inputs, double step);

/// Same comparison, but the central differences are taken on `reference`, an
/// extended-precision build of the same expression evaluated at the inputs
/// widened to long double. Analytic gradients still come from `builder`.
template <typename T>
GradCheckResult grad_check_detailed(const LossBuilder<T>& builder, const LossBuilder<long double>& reference,
                                    std::vector<Tensor<T>> inputs, double step);

template <typename T>
double grad_check(const LossBuilder<T>& builder, std::vector<Tensor<T>> inputs, double step) {
  return grad_check_detailed(builder, std::move(inputs), step).max_rel_error;
}

template <typename T>
double grad_check(const LossBuilder<T>& builder, const LossBuilder<long double>& reference,
                  std::vector<Tensor<T>> inputs, double step) {
  return grad_check_detailed(builder, reference, std::move(inputs), step).max_rel_error;
}

}  // namespace supar
