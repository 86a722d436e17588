// SPDX-License-Identifier: Apache-2.0
#pragma once

// Width-16 transformer losses for finite-difference checks.

#include <random>
#include <vector>

#include "supar/grad_check.hpp"
#include "supar/model.hpp"

namespace supar::testing {

struct TinyTransformerCase {
  TransformerModel<double> model;
  TransformerModel<long double> wide;
  std::vector<std::int64_t> tokens;
  std::vector<std::int64_t> targets;
  LossBuilder<double> builder;
  LossBuilder<long double> reference;
};

inline ModelConfig tiny_config(ParamScheme scheme, double density, std::uint64_t seed) {
  ModelConfig c;
  c.d_model = 16;
  c.d_head = 4;
  c.n_layers = 2;
  c.seq_len = 4;
  c.base.d_base = 16;
  c.density = density;
  c.scheme = scheme;
  c.seed = seed;
  return c;
}

inline TinyTransformerCase make_tiny_transformer(ParamScheme scheme, double density, std::uint64_t seed) {
  TinyTransformerCase t;
  t.model = build_model<double>(tiny_config(scheme, density, seed));
  t.wide = convert_model<long double>(t.model);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> byte(0, 255);
  for (int i = 0; i < 4; ++i) {
    t.tokens.push_back(byte(rng));
    t.targets.push_back(byte(rng));
  }
  // Builders capture by value so the case can be moved.
  t.builder = [m = t.model, tok = t.tokens, tgt = t.targets](Tape<double>& tape, std::span<const Tensor<double>> in) {
    return forward_loss(m.with_values(in), tape, tok, tgt, 1, 4).loss;
  };
  t.reference = [m = t.wide, tok = t.tokens, tgt = t.targets](Tape<long double>& tape,
                                                              std::span<const Tensor<long double>> in) {
    return forward_loss(m.with_values(in), tape, tok, tgt, 1, 4).loss;
  };
  return t;
}

}  // namespace supar::testing
