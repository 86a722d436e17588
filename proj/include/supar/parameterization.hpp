// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

namespace supar {

enum class ParamScheme { kSP, kMUP, kSUPAR, kMupSuparInitOnly, kMupSuparLrOnly };

const char* scheme_name(ParamScheme scheme);
ParamScheme scheme_from_name(const std::string& name);

enum class LayerRole { kEmbedding, kHidden, kUnembedding, kVector };

const char* role_name(LayerRole role);

enum class OptimizerKind { kAdamW, kSgd };

const char* optimizer_name(OptimizerKind kind);
OptimizerKind optimizer_from_name(const std::string& name);

/// Width- and density-independent constants of the dense base model.
struct BaseHyperparams {
  double sigma_base = 0.08665602;
  double eta_base = 1.62e-2;
  double alpha_input = 9.1705;
  double alpha_output = 1.0951835;
  std::size_t d_base = 256;
  double rho_base = 1.0;
};

/// Throws DomainError unless every field is positive and rho_base is in (0, 1].
void validate(const BaseHyperparams& base, std::size_t head_size);

/// True for every scheme with width-dependent (muP-style) multipliers.
bool is_mup_family(ParamScheme scheme);

/// Initialization standard deviation for a tensor of the given role.
double init_std(LayerRole role, ParamScheme scheme, const BaseHyperparams& base, double m_d, double m_rho);

/// Peak learning rate for a tensor of the given role. The SGD hidden rule
/// carries the 1/d_in factor of the normalized SGD update.
double layer_lr(LayerRole role, ParamScheme scheme, OptimizerKind optimizer, const BaseHyperparams& base,
                double m_d, double m_rho);

double attn_logit_scale(ParamScheme scheme, std::size_t d_head);

double forward_multiplier(LayerRole role, ParamScheme scheme, const BaseHyperparams& base, double m_d);

/// Role x quantity listing for logs and snapshots.
std::string scaling_table(ParamScheme scheme, OptimizerKind optimizer, const BaseHyperparams& base, double m_d,
                          double m_rho, std::size_t d_head);

}  // namespace supar
