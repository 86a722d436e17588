// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "supar/model.hpp"

namespace supar {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// First and second moments per parameter tensor, laid out like model.params.
template <std::floating_point T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t step = 0;

  static AdamState zeros_like(const std::vector<Param<T>>& params);
  static AdamState zeros_like(const TransformerModel<T>& model) { return zeros_like(model.params); }
  /// Zeroes both moments at the given flat positions of one tensor.
  void reset(std::size_t param, const std::vector<std::size_t>& positions);
};

/// One AdamW step with bias correction. Gradients, moments and updates are
/// multiplied by each tensor's mask; decay is w <- w (1 - lr wd) before the
/// Adam update, where lr = param.lr * schedule_multiplier.
template <std::floating_point T>
void adamw_step(std::vector<Param<T>>& params, AdamState<T>& state, double schedule_multiplier,
                const AdamConfig& cfg);

template <std::floating_point T>
void adamw_step(TransformerModel<T>& model, AdamState<T>& state, double schedule_multiplier, const AdamConfig& cfg) {
  adamw_step(model.params, state, schedule_multiplier, cfg);
}

template <std::floating_point T>
struct SgdState {
  std::vector<std::vector<T>> momentum;
  bool started = false;

  static SgdState zeros_like(const std::vector<Param<T>>& params);
  static SgdState zeros_like(const TransformerModel<T>& model) { return zeros_like(model.params); }
};

/// Plain or heavy-ball SGD: b <- mu b + g (b = g on the first step), w <- w - lr b.
template <std::floating_point T>
void sgd_step(std::vector<Param<T>>& params, SgdState<T>& state, double schedule_multiplier, double momentum);

template <std::floating_point T>
void sgd_step(TransformerModel<T>& model, SgdState<T>& state, double schedule_multiplier, double momentum) {
  sgd_step(model.params, state, schedule_multiplier, momentum);
}

enum class ScheduleKind { kLinearDecayToTenth, kDecayToZero, kConstant };

const char* schedule_name(ScheduleKind kind);
ScheduleKind schedule_from_name(const std::string& name);

struct ScheduleSpec {
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
  ScheduleKind kind = ScheduleKind::kLinearDecayToTenth;
};

/// (step + 1) / warmup during warmup, then linear from 1 to the end value at
/// total_steps (0.1, 0 or 1 by kind).
double schedule_multiplier(const ScheduleSpec& spec, std::size_t step);

}  // namespace supar
