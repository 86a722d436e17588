// SPDX-License-Identifier: Apache-2.0
#include "supar/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "supar/errors.hpp"

namespace supar {

namespace {

template <typename T>
std::vector<std::vector<double>> analytic_gradients(const LossBuilder<T>& builder, std::vector<Tensor<T>>& inputs) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tape<T> tape;
  const auto loss = builder(tape, inputs);
  if (loss.numel() != 1) throw ContractViolation("grad_check: builder must return a scalar loss");
  // A loss that does not depend on any input never reaches the tape.
  if (loss.requires_grad()) tape.backward(loss);
  std::vector<std::vector<double>> out;
  for (auto& in : inputs) {
    if (in.has_grad()) {
      out.emplace_back(in.grad().begin(), in.grad().end());
    } else {
      out.emplace_back(in.numel(), 0.0);
    }
  }
  return out;
}

template <typename U>
GradCheckResult compare(const LossBuilder<U>& builder, std::vector<Tensor<U>> inputs,
                        const std::vector<std::vector<double>>& analytic, double step) {
  auto evaluate = [&]() {
    Tape<U> tape;
    const auto loss = builder(tape, inputs);
    if (loss.numel() != 1) throw ContractViolation("grad_check: builder must return a scalar loss");
    return loss.item();
  };
  GradCheckResult result;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const U original = values[i];
      const U up_x = static_cast<U>(original + static_cast<U>(step));
      const U down_x = static_cast<U>(original - static_cast<U>(step));
      values[i] = up_x;
      const U up = evaluate();
      values[i] = down_x;
      const U down = evaluate();
      values[i] = original;
      const double numeric = static_cast<double>((up - down) / (up_x - down_x));
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      const double err = std::abs(a - numeric) / denom;
      if (err > result.max_rel_error) result = {err, t, i, a, numeric};
    }
  }
  return result;
}

}  // namespace

template <typename T>
GradCheckResult grad_check_detailed(const LossBuilder<T>& builder, std::vector<Tensor<T>> inputs, double step) {
  if (!(step > 0)) throw DomainError("grad_check: step must be positive");
  const auto analytic = analytic_gradients(builder, inputs);
  return compare(builder, std::move(inputs), analytic, step);
}

template <typename T>
GradCheckResult grad_check_detailed(const LossBuilder<T>& builder, const LossBuilder<long double>& reference,
                                    std::vector<Tensor<T>> inputs, double step) {
  if (!(step > 0)) throw DomainError("grad_check: step must be positive");
  const auto analytic = analytic_gradients(builder, inputs);
  std::vector<Tensor<long double>> wide;
  for (const auto& in : inputs) {
    std::vector<long double> data(in.data().begin(), in.data().end());
    wide.emplace_back(in.shape(), std::move(data));
  }
  return compare(reference, std::move(wide), analytic, step);
}

template GradCheckResult grad_check_detailed<float>(const LossBuilder<float>&, std::vector<Tensor<float>>, double);
template GradCheckResult grad_check_detailed<double>(const LossBuilder<double>&, std::vector<Tensor<double>>, double);
template GradCheckResult grad_check_detailed<float>(const LossBuilder<float>&, const LossBuilder<long double>&,
                                                    std::vector<Tensor<float>>, double);
template GradCheckResult grad_check_detailed<double>(const LossBuilder<double>&, const LossBuilder<long double>&,
                                                     std::vector<Tensor<double>>, double);

}  // namespace supar
