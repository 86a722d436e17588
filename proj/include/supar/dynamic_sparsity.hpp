// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "supar/mask.hpp"
#include "supar/model.hpp"
#include "supar/optimizer.hpp"

namespace supar {

enum class DstMethod { kRigl, kGmp };

const char* dst_method_name(DstMethod method);
DstMethod dst_method_from_name(const std::string& name);

struct DstConfig {
  DstMethod method = DstMethod::kRigl;
  std::size_t update_interval = 100;
  /// RigL only.
  double drop_fraction = 0.3;
  /// GMP only: final sparsity s_f and the step at which it is reached.
  double final_sparsity = 0.0;
  std::size_t end_step = 0;
  /// Zero Adam moments at every position whose mask bit changed.
  bool reset_moments = true;
};

/// Throws DomainError on out-of-range fields.
void validate(const DstConfig& config);

struct MaskUpdate {
  SparsityMask mask;
  std::vector<std::size_t> dropped;
  std::vector<std::size_t> grown;
};

/// Drops the k = floor(drop_fraction * active) smallest-|w| active positions
/// and grows the k largest-|g| positions among those inactive before the
/// update. Ties go to the lowest flat index.
template <std::floating_point T>
MaskUpdate rigl_update(std::span<const T> weights, std::span<const T> dense_grads, const SparsityMask& mask,
                       double drop_fraction);

/// s_final * (1 - (1 - min(t, t_end) / t_end)^3).
double gmp_target_sparsity(std::size_t t, std::size_t t_end, double s_final);

/// Keeps the round((1 - target) * numel) largest-|w| active positions. The
/// target may not be below the current sparsity.
template <std::floating_point T>
MaskUpdate magnitude_prune(std::span<const T> weights, const SparsityMask& mask, double target_sparsity);

/// Installs a new mask on one parameter: updates bits and mask tensor,
/// zeroes weights at inactive positions and optionally resets moments.
template <std::floating_point T>
void apply_mask_update(TransformerModel<T>& model, std::size_t param, const MaskUpdate& update,
                       AdamState<T>* state, bool reset_moments);

/// Replaces every hidden mask with an all-ones mask (GMP starting point).
template <std::floating_point T>
void densify_masks(TransformerModel<T>& model);

/// Whether `step` is a mask-update step for this config.
bool is_update_step(const DstConfig& config, std::size_t step);

struct DstEvent {
  std::size_t step = 0;
  std::size_t changed = 0;
  double density = 0.0;
};

/// Runs one mask update over every hidden tensor. `dense_grads` holds the
/// gradient of each effective (masked) weight, indexed like model.params;
/// RigL requires it, GMP ignores it.
template <std::floating_point T>
DstEvent dst_update(TransformerModel<T>& model, AdamState<T>* state, const DstConfig& config, std::size_t step,
                    const std::vector<std::vector<T>>& dense_grads);

}  // namespace supar
