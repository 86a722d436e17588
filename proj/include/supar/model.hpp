// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "supar/mask.hpp"
#include "supar/parameterization.hpp"
#include "supar/tape.hpp"

namespace supar {

struct ModelConfig {
  std::size_t d_model = 256;
  std::size_t n_layers = 2;
  std::size_t d_head = 64;
  std::size_t vocab_size = 256;
  std::size_t seq_len = 128;
  double density = 1.0;
  ParamScheme scheme = ParamScheme::kSUPAR;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  BaseHyperparams base;
  std::uint64_t seed = 0;
  double ln_eps = 1e-5;

  std::size_t n_heads() const { return d_model / d_head; }
  /// round(8/3 * d_model), rounded up to a multiple of 32.
  std::size_t ffn_hidden() const;
  double m_d() const { return static_cast<double>(d_model) / static_cast<double>(base.d_base); }
  double m_rho() const { return density / base.rho_base; }
};

/// Throws DomainError on an unusable configuration.
void validate(const ModelConfig& config);

/// splitmix64 finalizer, used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Sub-seed for one tensor: seed xor a mixed (layer, tag) code.
std::uint64_t sub_seed(std::uint64_t seed, std::size_t layer, std::uint64_t tag);

template <std::floating_point T>
struct Param {
  std::string name;
  LayerRole role = LayerRole::kHidden;
  Tensor<T> value;
  double lr = 0.0;
  double init_std = 0.0;
  std::optional<SparsityMask> mask;
  /// The mask as a constant tensor of the weight's shape (hidden tensors only).
  Tensor<T> mask_values;

  bool masked() const { return mask.has_value(); }
};

struct LayerSlots {
  std::size_t ln1, wq, wk, wv, wo, ln2, w1, w3, w2;
};

/// Pre-norm decoder with ALiBi attention, SwiGLU FFN and a tied unembedding.
/// Hidden weights are [d_in, d_out]; a block computes Y = X (W * M).
template <std::floating_point T>
struct TransformerModel {
  ModelConfig config;
  std::vector<Param<T>> params;
  std::size_t embedding = 0;
  std::size_t final_norm = 0;
  std::vector<LayerSlots> layers;
  double attn_scale = 1.0;
  double embed_multiplier = 1.0;
  double unembed_multiplier = 1.0;
  std::vector<double> alibi_slopes;

  std::vector<Tensor<T>> values() const;
  /// Shallow copy using the given tensors as parameter values.
  TransformerModel with_values(std::span<const Tensor<T>> values) const;
};

template <std::floating_point T>
TransformerModel<T> build_model(const ModelConfig& config);

/// Deep copy into another scalar type.
template <std::floating_point U, std::floating_point T>
TransformerModel<U> convert_model(const TransformerModel<T>& model);

/// Mean |.| statistics of one transformer layer.
struct BlockStats {
  /// Attention and FFN block outputs, before the residual add.
  double attn_out = 0.0;
  double ffn_out = 0.0;
  /// Residual stream after each add.
  double attn_resid = 0.0;
  double ffn_resid = 0.0;
  /// Outputs of the projections that read a normalized input (Q/K/V and W1/W3).
  double attn_proj = 0.0;
  double ffn_proj = 0.0;
};

template <std::floating_point T>
struct ForwardResult {
  Tensor<T> loss;
  std::vector<BlockStats> stats;
  /// Indexed like model.params; defined for hidden tensors only.
  std::vector<Tensor<T>> proj_in;
  std::vector<Tensor<T>> proj_out;
  std::vector<Tensor<T>> effective_weights;
};

/// Mean next-token cross-entropy of tokens/targets laid out [batch, len].
template <std::floating_point T>
ForwardResult<T> forward_loss(const TransformerModel<T>& model, Tape<T>& tape, std::span<const std::int64_t> tokens,
                              std::span<const std::int64_t> targets, std::size_t batch, std::size_t len);

struct ParamCount {
  std::size_t total = 0;
  std::size_t nonzero = 0;
  std::vector<std::string> hidden_names;
  /// Nonzero fan-in per output neuron, averaged over the neurons of each hidden tensor.
  std::vector<double> wpn_per_layer;
};

template <std::floating_point T>
ParamCount count_params(const TransformerModel<T>& model);

/// Number of positions violating W * (1 - M) = 0 across hidden tensors.
template <std::floating_point T>
std::size_t pruned_nonzeros(const TransformerModel<T>& model);

template <std::floating_point T>
double mean_abs(std::span<const T> values);

}  // namespace supar
