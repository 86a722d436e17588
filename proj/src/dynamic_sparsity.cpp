// SPDX-License-Identifier: Apache-2.0
#include "supar/dynamic_sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "supar/errors.hpp"

namespace supar {

const char* dst_method_name(DstMethod method) {
  switch (method) {
    case DstMethod::kRigl:
      return "rigl";
    case DstMethod::kGmp:
      return "gmp";
  }
  return "?";
}

DstMethod dst_method_from_name(const std::string& name) {
  if (name == "rigl") return DstMethod::kRigl;
  if (name == "gmp") return DstMethod::kGmp;
  throw ConfigError("unknown dst method '" + name + "'");
}

void validate(const DstConfig& config) {
  if (config.update_interval == 0) throw DomainError("dst: update_interval must be at least 1");
  if (config.method == DstMethod::kRigl && !(config.drop_fraction > 0.0 && config.drop_fraction < 1.0))
    throw DomainError("dst: drop_fraction must lie in (0,1)");
  if (config.method == DstMethod::kGmp) {
    if (!(config.final_sparsity >= 0.0 && config.final_sparsity < 1.0))
      throw DomainError("dst: final_sparsity must lie in [0,1)");
    if (config.end_step == 0) throw DomainError("dst: gmp end_step must be positive");
  }
}

namespace {

template <std::floating_point T>
void check_sizes(std::span<const T> values, const SparsityMask& mask, const char* what) {
  if (values.size() != mask.numel() || mask.bits.size() != mask.numel()) {
    std::ostringstream msg;
    msg << what << ": " << values.size() << " values for a " << mask.d_in << "x" << mask.d_out << " mask";
    throw ContractViolation(msg.str());
  }
}

/// First k candidates after a stable sort by the given key.
template <typename Key>
std::vector<std::size_t> select(std::vector<std::size_t> candidates, std::size_t k, Key before) {
  std::stable_sort(candidates.begin(), candidates.end(), before);
  candidates.resize(std::min(k, candidates.size()));
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

}  // namespace

template <std::floating_point T>
MaskUpdate rigl_update(std::span<const T> weights, std::span<const T> dense_grads, const SparsityMask& mask,
                       double drop_fraction) {
  check_sizes(weights, mask, "rigl_update");
  check_sizes(dense_grads, mask, "rigl_update");
  if (!(drop_fraction >= 0.0 && drop_fraction < 1.0)) throw DomainError("rigl_update: drop_fraction outside [0,1)");
  std::vector<std::size_t> active, inactive;
  for (std::size_t i = 0; i < mask.numel(); ++i) (mask.bits[i] ? active : inactive).push_back(i);
  const auto k = std::min(static_cast<std::size_t>(std::floor(drop_fraction * static_cast<double>(active.size()))),
                          inactive.size());
  MaskUpdate out{mask, {}, {}};
  if (k == 0) return out;
  // Candidates are in index order, so the stable sort keeps ties lowest-first.
  out.dropped = select(active, k, [&](std::size_t a, std::size_t b) {
    return std::abs(weights[a]) < std::abs(weights[b]);
  });
  out.grown = select(inactive, k, [&](std::size_t a, std::size_t b) {
    return std::abs(dense_grads[a]) > std::abs(dense_grads[b]);
  });
  for (auto i : out.dropped) out.mask.bits[i] = 0;
  for (auto i : out.grown) out.mask.bits[i] = 1;
  return out;
}

double gmp_target_sparsity(std::size_t t, std::size_t t_end, double s_final) {
  if (t_end == 0) throw DomainError("gmp_target_sparsity: t_end must be positive");
  if (!(s_final >= 0.0 && s_final < 1.0)) throw DomainError("gmp_target_sparsity: s_final outside [0,1)");
  const double frac = static_cast<double>(std::min(t, t_end)) / static_cast<double>(t_end);
  return s_final * (1.0 - std::pow(1.0 - frac, 3));
}

template <std::floating_point T>
MaskUpdate magnitude_prune(std::span<const T> weights, const SparsityMask& mask, double target_sparsity) {
  check_sizes(weights, mask, "magnitude_prune");
  if (!(target_sparsity >= 0.0 && target_sparsity < 1.0))
    throw DomainError("magnitude_prune: target sparsity outside [0,1)");
  const std::size_t keep = mask_count(mask.numel(), 1.0 - target_sparsity);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < mask.numel(); ++i)
    if (mask.bits[i]) active.push_back(i);
  if (keep > active.size()) {
    std::ostringstream msg;
    msg << "magnitude_prune: target sparsity " << target_sparsity << " keeps " << keep << " of " << mask.numel()
        << " positions but only " << active.size() << " are active";
    throw ContractViolation(msg.str());
  }
  const auto kept = select(active, keep, [&](std::size_t a, std::size_t b) {
    return std::abs(weights[a]) > std::abs(weights[b]);
  });
  MaskUpdate out{mask, {}, {}};
  std::fill(out.mask.bits.begin(), out.mask.bits.end(), 0);
  for (auto i : kept) out.mask.bits[i] = 1;
  for (auto i : active)
    if (!out.mask.bits[i]) out.dropped.push_back(i);
  out.mask.density = static_cast<double>(keep) / static_cast<double>(mask.numel());
  return out;
}

template <std::floating_point T>
void apply_mask_update(TransformerModel<T>& model, std::size_t param, const MaskUpdate& update,
                       AdamState<T>* state, bool reset_moments) {
  auto& p = model.params.at(param);
  if (!p.masked()) throw ContractViolation("apply_mask_update: parameter '" + p.name + "' has no mask");
  if (update.mask.numel() != p.value.numel())
    throw ContractViolation("apply_mask_update: mask shape does not match '" + p.name + "'");
  p.mask = update.mask;
  auto w = p.value.mutable_data();
  auto m = p.mask_values.mutable_data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = static_cast<T>(update.mask.bits[i]);
    if (!update.mask.bits[i]) w[i] = T(0);
  }
  for (auto i : update.grown) w[i] = T(0);
  if (state != nullptr && reset_moments) {
    state->reset(param, update.dropped);
    state->reset(param, update.grown);
  }
}

template <std::floating_point T>
void densify_masks(TransformerModel<T>& model) {
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    auto& p = model.params[i];
    if (!p.masked()) continue;
    MaskUpdate update{dense_mask(p.mask->d_in, p.mask->d_out), {}, {}};
    update.mask.seed = p.mask->seed;
    apply_mask_update(model, i, update, static_cast<AdamState<T>*>(nullptr), false);
  }
}

bool is_update_step(const DstConfig& config, std::size_t step) {
  if (step == 0 || step % config.update_interval != 0) return false;
  // GMP holds the final mask once the schedule ends.
  if (config.method == DstMethod::kGmp) return step <= config.end_step;
  return true;
}

template <std::floating_point T>
DstEvent dst_update(TransformerModel<T>& model, AdamState<T>* state, const DstConfig& config, std::size_t step,
                    const std::vector<std::vector<T>>& dense_grads) {
  validate(config);
  DstEvent event{step, 0, 0.0};
  std::size_t ones = 0, total = 0;
  double target = 0.0;
  if (config.method == DstMethod::kGmp) target = gmp_target_sparsity(step, config.end_step, config.final_sparsity);
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    auto& p = model.params[i];
    if (!p.masked()) continue;
    MaskUpdate update;
    if (config.method == DstMethod::kRigl) {
      if (i >= dense_grads.size() || dense_grads[i].size() != p.value.numel())
        throw ContractViolation("dst_update: missing dense gradient for '" + p.name + "'");
      update = rigl_update<T>(p.value.data(), dense_grads[i], *p.mask, config.drop_fraction);
    } else {
      // Never ask for less sparsity than the tensor already has.
      const double current = 1.0 - static_cast<double>(p.mask->ones()) / static_cast<double>(p.mask->numel());
      update = magnitude_prune<T>(p.value.data(), *p.mask, std::max(target, current));
    }
    event.changed += update.dropped.size() + update.grown.size();
    apply_mask_update(model, i, update, state, config.reset_moments);
    ones += p.mask->ones();
    total += p.mask->numel();
  }
  event.density = total ? static_cast<double>(ones) / static_cast<double>(total) : 1.0;
  return event;
}

#define SUPAR_INSTANTIATE(T)                                                                                     \
  template MaskUpdate rigl_update<T>(std::span<const T>, std::span<const T>, const SparsityMask&, double);      \
  template MaskUpdate magnitude_prune<T>(std::span<const T>, const SparsityMask&, double);                      \
  template void apply_mask_update<T>(TransformerModel<T>&, std::size_t, const MaskUpdate&, AdamState<T>*, bool); \
  template void densify_masks<T>(TransformerModel<T>&);                                                         \
  template DstEvent dst_update<T>(TransformerModel<T>&, AdamState<T>*, const DstConfig&, std::size_t,           \
                                  const std::vector<std::vector<T>>&);

SUPAR_INSTANTIATE(float)
SUPAR_INSTANTIATE(double)

#undef SUPAR_INSTANTIATE

}  // namespace supar
