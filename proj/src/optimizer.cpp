// SPDX-License-Identifier: Apache-2.0
#include "supar/optimizer.hpp"

#include <cmath>
#include <sstream>

#include "supar/errors.hpp"

namespace supar {

namespace {

void check_multiplier(double mult) {
  if (!(mult > 0.0 && mult <= 1.0)) {
    std::ostringstream msg;
    msg << "schedule multiplier " << mult << " outside (0, 1]";
    throw DomainError(msg.str());
  }
}

template <typename T>
void check_grads(const std::vector<Param<T>>& params) {
  for (const auto& p : params) {
    if (!p.value.has_grad()) throw ContractViolation("optimizer step: no gradient for " + p.name);
  }
}

template <typename T>
std::vector<std::vector<T>> zero_buffers(const std::vector<Param<T>>& params) {
  std::vector<std::vector<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.value.numel(), T(0));
  return out;
}

}  // namespace

template <std::floating_point T>
AdamState<T> AdamState<T>::zeros_like(const std::vector<Param<T>>& params) {
  AdamState s;
  s.m = zero_buffers(params);
  s.v = zero_buffers(params);
  return s;
}

template <std::floating_point T>
void AdamState<T>::reset(std::size_t param, const std::vector<std::size_t>& positions) {
  if (param >= m.size()) throw ContractViolation("AdamState::reset: parameter index out of range");
  for (const auto i : positions) {
    m[param].at(i) = T(0);
    v[param].at(i) = T(0);
  }
}

template <std::floating_point T>
void adamw_step(std::vector<Param<T>>& params, AdamState<T>& state, double schedule_multiplier,
                const AdamConfig& cfg) {
  check_multiplier(schedule_multiplier);
  check_grads(params);
  if (state.m.size() != params.size()) throw ContractViolation("adamw_step: state does not match the model");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2), eps = static_cast<T>(cfg.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    const T lr = static_cast<T>(p.lr * schedule_multiplier);
    const T decay = static_cast<T>(1.0 - p.lr * schedule_multiplier * cfg.weight_decay);
    const auto g = p.value.grad();
    auto w = p.value.mutable_data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    const std::uint8_t* bits = p.masked() ? p.mask->bits.data() : nullptr;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (bits && !bits[i]) {
        w[i] = T(0);
        m[i] = T(0);
        v[i] = T(0);
        continue;
      }
      if (cfg.weight_decay != 0.0) w[i] *= decay;
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = m[i] / bc1;
      const T v_hat = v[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <std::floating_point T>
SgdState<T> SgdState<T>::zeros_like(const std::vector<Param<T>>& params) {
  SgdState s;
  s.momentum = zero_buffers(params);
  return s;
}

template <std::floating_point T>
void sgd_step(std::vector<Param<T>>& params, SgdState<T>& state, double schedule_multiplier, double momentum) {
  check_multiplier(schedule_multiplier);
  check_grads(params);
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("sgd_step: momentum outside [0, 1)");
  if (state.momentum.size() != params.size()) throw ContractViolation("sgd_step: state does not match the model");
  const T mu = static_cast<T>(momentum);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    const T lr = static_cast<T>(p.lr * schedule_multiplier);
    const auto g = p.value.grad();
    auto w = p.value.mutable_data();
    auto& buf = state.momentum[k];
    const std::uint8_t* bits = p.masked() ? p.mask->bits.data() : nullptr;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (bits && !bits[i]) {
        w[i] = T(0);
        buf[i] = T(0);
        continue;
      }
      T step = g[i];
      if (momentum != 0.0) {
        buf[i] = state.started ? mu * buf[i] + g[i] : g[i];
        step = buf[i];
      }
      w[i] -= lr * step;
    }
  }
  state.started = true;
}

const char* schedule_name(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kLinearDecayToTenth: return "linear-decay-to-tenth";
    case ScheduleKind::kDecayToZero: return "decay-to-zero";
    case ScheduleKind::kConstant: return "constant";
  }
  return "?";
}

ScheduleKind schedule_from_name(const std::string& name) {
  for (auto k : {ScheduleKind::kLinearDecayToTenth, ScheduleKind::kDecayToZero, ScheduleKind::kConstant}) {
    if (name == schedule_name(k)) return k;
  }
  throw ConfigError("unknown schedule kind '" + name + "'");
}

double schedule_multiplier(const ScheduleSpec& spec, std::size_t step) {
  if (spec.total_steps == 0 || spec.warmup_steps > spec.total_steps) {
    throw DomainError("schedule: need 0 < total_steps and warmup_steps <= total_steps");
  }
  if (step > spec.total_steps) {
    std::ostringstream msg;
    msg << "schedule: step " << step << " beyond total " << spec.total_steps;
    throw DomainError(msg.str());
  }
  if (step < spec.warmup_steps) {
    return static_cast<double>(step + 1) / static_cast<double>(spec.warmup_steps);
  }
  if (spec.kind == ScheduleKind::kConstant || spec.total_steps == spec.warmup_steps) return 1.0;
  const double frac = static_cast<double>(step - spec.warmup_steps) /
                      static_cast<double>(spec.total_steps - spec.warmup_steps);
  const double floor = spec.kind == ScheduleKind::kLinearDecayToTenth ? 0.1 : 0.0;
  return 1.0 - (1.0 - floor) * frac;
}

#define SUPAR_OPT_INSTANTIATE(T)                                                              \
  template struct AdamState<T>;                                                               \
  template struct SgdState<T>;                                                                \
  template void adamw_step<T>(std::vector<Param<T>>&, AdamState<T>&, double, const AdamConfig&); \
  template void sgd_step<T>(std::vector<Param<T>>&, SgdState<T>&, double, double);

SUPAR_OPT_INSTANTIATE(float)
SUPAR_OPT_INSTANTIATE(double)

}  // namespace supar
