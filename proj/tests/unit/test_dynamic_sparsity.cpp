// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <random>

#include "doctest.h"
#include "supar/dynamic_sparsity.hpp"
#include "supar/errors.hpp"

using namespace supar;

namespace {

SparsityMask row_mask(std::vector<std::uint8_t> bits) {
  SparsityMask m;
  m.d_in = 1;
  m.d_out = bits.size();
  m.bits = std::move(bits);
  m.density = static_cast<double>(m.ones()) / static_cast<double>(m.numel());
  return m;
}

ModelConfig small(double density) {
  ModelConfig c;
  c.d_model = 32;
  c.d_head = 8;
  c.n_layers = 2;
  c.seq_len = 8;
  c.base.d_base = 32;
  c.density = density;
  c.seed = 4;
  return c;
}

// Returns the dense gradient of every effective hidden weight.
std::vector<std::vector<double>> train_step(TransformerModel<double>& model, AdamState<double>& state,
                                            std::mt19937_64& rng) {
  std::vector<std::int64_t> tokens(16), targets(16);
  for (auto& t : tokens) t = static_cast<std::int64_t>(rng() % 256);
  for (auto& t : targets) t = static_cast<std::int64_t>(rng() % 256);
  for (auto& p : model.params) p.value.zero_grad();
  Tape<double> tape;
  auto r = forward_loss(model, tape, tokens, targets, 2, 8);
  tape.backward(r.loss);
  std::vector<std::vector<double>> dense(model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i)
    if (r.effective_weights[i].defined())
      dense[i].assign(r.effective_weights[i].grad().begin(), r.effective_weights[i].grad().end());
  adamw_step(model, state, 1.0, AdamConfig{});
  return dense;
}

void check_zero_invariant(const TransformerModel<double>& model, const AdamState<double>& state) {
  CHECK(pruned_nonzeros(model) == 0);
  for (std::size_t k = 0; k < model.params.size(); ++k) {
    const auto& p = model.params[k];
    if (!p.masked()) continue;
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      if (p.mask_values.data()[i] != p.mask->bits[i]) FAIL("mask tensor out of sync");
      if (!p.mask->bits[i] && (state.m[k][i] != 0.0 || state.v[k][i] != 0.0)) FAIL("moment at inactive position");
    }
  }
}

}  // namespace

TEST_CASE("RigL example") {
  const std::vector<double> w{0.5, -0.01, 0.0, 0.0};
  const std::vector<double> g{0.7, 0.1, 0.3, 0.9};
  const auto u = rigl_update<double>(w, g, row_mask({1, 1, 0, 0}), 0.5);
  CHECK(u.mask.bits == std::vector<std::uint8_t>{1, 0, 0, 1});
  CHECK(u.dropped == std::vector<std::size_t>{1});
  CHECK(u.grown == std::vector<std::size_t>{3});

  const auto same = rigl_update<double>(w, g, row_mask({1, 1, 0, 0}), 0.3);
  CHECK(same.mask == row_mask({1, 1, 0, 0}));
  CHECK(same.dropped.empty());
}

TEST_CASE("RigL ties go to the lowest index") {
  const std::vector<double> w{0.2, 0.2, 0.2, 0.0, 0.0, 0.0};
  const std::vector<double> g{0.0, 0.0, 0.0, 0.5, 0.5, 0.5};
  const auto u = rigl_update<double>(w, g, row_mask({1, 1, 1, 0, 0, 0}), 0.5);
  CHECK(u.dropped == std::vector<std::size_t>{0});
  CHECK(u.grown == std::vector<std::size_t>{3});
}

TEST_CASE("property: RigL matches a sort-based enumeration and keeps density") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d_in = 2 + rng() % 5, d_out = 2 + rng() % 8;
    const double rho = std::uniform_real_distribution<double>(0.3, 1.0)(rng);
    auto mask = sample_random_mask(d_in, d_out, rho, rng());
    std::vector<double> w(mask.numel()), g(mask.numel());
    for (std::size_t i = 0; i < w.size(); ++i) {
      // Coarse values force ties.
      w[i] = mask.bits[i] ? std::round(n01(rng) * 2) / 2 : 0.0;
      g[i] = std::round(n01(rng) * 2) / 2;
    }
    const double frac = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    const auto u = rigl_update<double>(w, g, mask, frac);

    std::vector<std::pair<double, std::size_t>> act, inact;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (mask.bits[i])
        act.emplace_back(std::abs(w[i]), i);
      else
        inact.emplace_back(-std::abs(g[i]), i);
    }
    std::sort(act.begin(), act.end());
    std::sort(inact.begin(), inact.end());
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(frac * act.size()), inact.size());
    auto expected = mask;
    for (std::size_t j = 0; j < k; ++j) {
      expected.bits[act[j].second] = 0;
      expected.bits[inact[j].second] = 1;
    }
    CHECK(u.mask == expected);
    CHECK(u.mask.ones() == mask.ones());
  }
}

TEST_CASE("GMP cubic schedule") {
  CHECK(gmp_target_sparsity(0, 100, 0.8) == 0.0);
  CHECK(gmp_target_sparsity(100, 100, 0.8) == doctest::Approx(0.8));
  CHECK(gmp_target_sparsity(50, 100, 0.8) == doctest::Approx(0.7));
  CHECK(gmp_target_sparsity(400, 100, 0.8) == doctest::Approx(0.8));
  CHECK_THROWS_AS(gmp_target_sparsity(5, 0, 0.8), DomainError);
  CHECK_THROWS_AS(gmp_target_sparsity(5, 10, 1.0), DomainError);
  double prev = 0.0;
  for (std::size_t t = 0; t <= 120; ++t) {
    const double s = gmp_target_sparsity(t, 120, 0.9);
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("magnitude pruning") {
  const std::vector<double> w{3.0, -2.0, 1.0, 0.5};
  const auto half = magnitude_prune<double>(w, dense_mask(1, 4), 0.5);
  CHECK(half.mask.bits == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(half.dropped == std::vector<std::size_t>{2, 3});
  CHECK(magnitude_prune<double>(w, dense_mask(1, 4), 0.0).mask.bits == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK(magnitude_prune<double>(w, half.mask, 0.5).mask == half.mask);
  CHECK_THROWS_AS(magnitude_prune<double>(w, half.mask, 0.25), ContractViolation);
  const std::vector<double> tied{1.0, 1.0, 1.0, 1.0};
  CHECK(magnitude_prune<double>(tied, dense_mask(1, 4), 0.75).mask.bits == std::vector<std::uint8_t>{1, 0, 0, 0});
}

TEST_CASE("dst config validation") {
  DstConfig c;
  CHECK_NOTHROW(validate(c));
  c.drop_fraction = 1.0;
  CHECK_THROWS_AS(validate(c), DomainError);
  c = DstConfig{};
  c.update_interval = 0;
  CHECK_THROWS_AS(validate(c), DomainError);
  c = DstConfig{DstMethod::kGmp, 10, 0.3, 0.8, 0, true};
  CHECK_THROWS_AS(validate(c), DomainError);
  CHECK(dst_method_from_name("gmp") == DstMethod::kGmp);
  CHECK_THROWS_AS(dst_method_from_name("set"), ConfigError);
}

TEST_CASE("RigL during training keeps density and the zero invariant") {
  auto model = build_model<double>(small(0.25));
  auto state = AdamState<double>::zeros_like(model);
  std::vector<std::size_t> ones_before;
  for (const auto& p : model.params)
    if (p.masked()) ones_before.push_back(p.mask->ones());
  const DstConfig cfg{DstMethod::kRigl, 3, 0.3, 0.0, 0, true};
  std::mt19937_64 rng(1);
  std::size_t changed = 0;
  for (std::size_t step = 1; step <= 12; ++step) {
    const auto dense = train_step(model, state, rng);
    if (is_update_step(cfg, step)) changed += dst_update(model, &state, cfg, step, dense).changed;
    check_zero_invariant(model, state);
  }
  CHECK(changed > 0);
  std::size_t j = 0;
  for (const auto& p : model.params)
    if (p.masked()) CHECK(p.mask->ones() == ones_before[j++]);
}

TEST_CASE("GMP during training follows the cubic schedule") {
  auto model = build_model<double>(small(0.25));
  densify_masks(model);
  auto state = AdamState<double>::zeros_like(model);
  const DstConfig cfg{DstMethod::kGmp, 2, 0.3, 0.75, 8, true};
  std::mt19937_64 rng(2);
  for (std::size_t step = 1; step <= 12; ++step) {
    const auto dense = train_step(model, state, rng);
    if (!is_update_step(cfg, step)) continue;
    dst_update(model, &state, cfg, step, dense);
    check_zero_invariant(model, state);
    const double target = gmp_target_sparsity(step, cfg.end_step, cfg.final_sparsity);
    for (const auto& p : model.params)
      if (p.masked()) CHECK(p.mask->ones() == mask_count(p.mask->numel(), 1.0 - target));
  }
  CHECK_FALSE(is_update_step(cfg, 10));
}
