// SPDX-License-Identifier: Apache-2.0
#include "supar/parameterization.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "supar/errors.hpp"

namespace supar {

namespace {

void check_multipliers(double m_d, double m_rho, const char* what) {
  if (!(m_d > 0.0)) throw DomainError(std::string(what) + ": width multiplier must be positive");
  if (!(m_rho > 0.0 && m_rho <= 1.0)) throw DomainError(std::string(what) + ": density multiplier outside (0, 1]");
}

bool sparse_init(ParamScheme s) { return s == ParamScheme::kSUPAR || s == ParamScheme::kMupSuparInitOnly; }
bool sparse_lr(ParamScheme s) { return s == ParamScheme::kSUPAR || s == ParamScheme::kMupSuparLrOnly; }

}  // namespace

const char* scheme_name(ParamScheme scheme) {
  switch (scheme) {
    case ParamScheme::kSP: return "SP";
    case ParamScheme::kMUP: return "MUP";
    case ParamScheme::kSUPAR: return "SUPAR";
    case ParamScheme::kMupSuparInitOnly: return "MUP_SUPAR_INIT_ONLY";
    case ParamScheme::kMupSuparLrOnly: return "MUP_SUPAR_LR_ONLY";
  }
  return "?";
}

ParamScheme scheme_from_name(const std::string& name) {
  for (auto s : {ParamScheme::kSP, ParamScheme::kMUP, ParamScheme::kSUPAR, ParamScheme::kMupSuparInitOnly,
                 ParamScheme::kMupSuparLrOnly}) {
    if (name == scheme_name(s)) return s;
  }
  throw ConfigError("unknown parameterization scheme '" + name + "'");
}

const char* role_name(LayerRole role) {
  switch (role) {
    case LayerRole::kEmbedding: return "embedding";
    case LayerRole::kHidden: return "hidden";
    case LayerRole::kUnembedding: return "unembedding";
    case LayerRole::kVector: return "vector";
  }
  return "?";
}

const char* optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::kAdamW ? "adamw" : "sgd"; }

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adamw" || name == "adam") return OptimizerKind::kAdamW;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void validate(const BaseHyperparams& base, std::size_t head_size) {
  if (!(base.sigma_base > 0) || !(base.eta_base > 0) || !(base.alpha_input > 0) || !(base.alpha_output > 0)) {
    throw DomainError("base hyperparameters must be positive");
  }
  if (!(base.rho_base > 0 && base.rho_base <= 1)) throw DomainError("base density outside (0, 1]");
  if (base.d_base == 0 || head_size == 0 || base.d_base % head_size != 0) {
    throw DomainError("base width must be a positive multiple of the head size");
  }
}

bool is_mup_family(ParamScheme scheme) { return scheme != ParamScheme::kSP; }

double init_std(LayerRole role, ParamScheme scheme, const BaseHyperparams& base, double m_d, double m_rho) {
  check_multipliers(m_d, m_rho, "init_std");
  if (role != LayerRole::kHidden || scheme == ParamScheme::kSP) return base.sigma_base;
  if (sparse_init(scheme)) return base.sigma_base / std::sqrt(m_d * m_rho);
  return base.sigma_base / std::sqrt(m_d);
}

double layer_lr(LayerRole role, ParamScheme scheme, OptimizerKind optimizer, const BaseHyperparams& base, double m_d,
                double m_rho) {
  check_multipliers(m_d, m_rho, "layer_lr");
  if (role != LayerRole::kHidden || scheme == ParamScheme::kSP) return base.eta_base;
  const double width = optimizer == OptimizerKind::kSgd ? m_d * static_cast<double>(base.d_base) : m_d;
  if (sparse_lr(scheme)) return base.eta_base / (width * m_rho);
  return base.eta_base / width;
}

double attn_logit_scale(ParamScheme scheme, std::size_t d_head) {
  if (d_head == 0) throw DomainError("attn_logit_scale: head size must be positive");
  const double d = static_cast<double>(d_head);
  return scheme == ParamScheme::kSP ? 1.0 / std::sqrt(d) : 1.0 / d;
}

double forward_multiplier(LayerRole role, ParamScheme scheme, const BaseHyperparams& base, double m_d) {
  if (!(m_d > 0.0)) throw DomainError("forward_multiplier: width multiplier must be positive");
  if (scheme == ParamScheme::kSP) return 1.0;
  switch (role) {
    case LayerRole::kEmbedding: return base.alpha_input;
    case LayerRole::kUnembedding: return base.alpha_output / m_d;
    default: return 1.0;
  }
}

std::string scaling_table(ParamScheme scheme, OptimizerKind optimizer, const BaseHyperparams& base, double m_d,
                          double m_rho, std::size_t d_head) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "scheme " << scheme_name(scheme) << "  optimizer " << optimizer_name(optimizer) << "  m_d " << m_d
      << "  m_rho " << m_rho << "\n";
  out << std::left << std::setw(12) << "role" << std::setw(18) << "init_std" << std::setw(18) << "lr"
      << "multiplier\n";
  for (auto role : {LayerRole::kEmbedding, LayerRole::kHidden, LayerRole::kUnembedding, LayerRole::kVector}) {
    out << std::setw(12) << role_name(role) << std::setw(18) << init_std(role, scheme, base, m_d, m_rho)
        << std::setw(18) << layer_lr(role, scheme, optimizer, base, m_d, m_rho)
        << forward_multiplier(role, scheme, base, m_d) << "\n";
  }
  out << "attention logit scale " << attn_logit_scale(scheme, d_head) << "\n";
  return out.str();
}

}  // namespace supar
