// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "supar/errors.hpp"
#include "supar/mask.hpp"
#include "supar/parameterization.hpp"

using namespace supar;

TEST_CASE("exact-count sampling examples") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(sample_random_mask(4, 4, 0.5, seed).ones() == 8);
    CHECK(sample_random_mask(8, 8, 1.0, seed).ones() == 64);
  }
}

TEST_CASE("column counts follow the hypergeometric law") {
  const std::size_t d = 2048;
  const double rho = 1.0 / 128.0;
  // Oracle: hypergeometric variance of a 2048-cell column drawn from the whole tensor.
  const double big_n = static_cast<double>(d * d), k = big_n * rho, n = static_cast<double>(d);
  const double expected_sd = std::sqrt(n * (k / big_n) * (1 - k / big_n) * (big_n - n) / (big_n - 1));
  CHECK(expected_sd == doctest::Approx(std::sqrt(16 * (1 - rho))).epsilon(1e-3));
  double sd_sum = 0;
  const int seeds = 4;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto mask = sample_random_mask(d, d, rho, static_cast<std::uint64_t>(seed));
    CHECK(mask.ones() == 32768);
    const auto stats = mask_stats(mask);
    double mean = 0, var = 0;
    for (auto c : stats.per_column_counts) mean += static_cast<double>(c);
    mean /= static_cast<double>(d);
    for (auto c : stats.per_column_counts) var += std::pow(static_cast<double>(c) - mean, 2);
    var /= static_cast<double>(d - 1);
    CHECK(mean == doctest::Approx(16.0));
    sd_sum += std::sqrt(var);
  }
  CHECK(sd_sum / seeds == doctest::Approx(expected_sd).epsilon(0.03));
}

TEST_CASE("mask errors") {
  CHECK_THROWS_AS(sample_random_mask(4, 4, 0.0, 1), DomainError);
  CHECK_THROWS_AS(sample_random_mask(4, 4, 1.5, 1), DomainError);
  CHECK_THROWS_AS(sample_random_mask(4, 4, 0.01, 1), DegenerateMask);
}

TEST_CASE("mask_stats examples") {
  const auto dense = mask_stats(dense_mask(4, 4));
  CHECK(dense.density == 1.0);
  for (auto c : dense.per_column_counts) CHECK(c == 4);
  for (auto c : dense.per_row_counts) CHECK(c == 4);
  const auto half = mask_stats(sample_random_mask(4, 4, 0.5, 9));
  CHECK(half.density == 0.5);
  CHECK(half.per_column_counts.size() == 4);
  CHECK(half.per_row_counts.size() == 4);
}

TEST_CASE("property: random masks have exact counts, determinism, and consistent stats") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d_in = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    const std::size_t d_out = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    const double rho = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const std::uint64_t seed = rng();
    const std::size_t expect = static_cast<std::size_t>(std::llround(rho * static_cast<double>(d_in * d_out)));
    if (expect == 0) {
      CHECK_THROWS_AS(sample_random_mask(d_in, d_out, rho, seed), DegenerateMask);
      continue;
    }
    const auto a = sample_random_mask(d_in, d_out, rho, seed);
    const auto b = sample_random_mask(d_in, d_out, rho, seed);
    CHECK(a.bits == b.bits);
    CHECK(a.ones() == expect);
    const auto stats = mask_stats(a);
    CHECK(stats.density == static_cast<double>(expect) / static_cast<double>(d_in * d_out));
    std::size_t col_total = 0, row_total = 0;
    for (auto c : stats.per_column_counts) col_total += c;
    for (auto r : stats.per_row_counts) row_total += r;
    CHECK(col_total == expect);
    CHECK(row_total == expect);
    // Column-count mean equals d_in * density exactly for the realized density.
    CHECK(static_cast<double>(col_total) / static_cast<double>(d_out) ==
          doctest::Approx(static_cast<double>(d_in) * stats.density));
  }
}

TEST_CASE("different seeds give different patterns") {
  CHECK(sample_random_mask(32, 32, 0.25, 1).bits != sample_random_mask(32, 32, 0.25, 2).bits);
}

TEST_CASE("iso-parameter widths") {
  CHECK(iso_parameter_width(256, 1.0, 0.25) == 512);
  CHECK(iso_parameter_width(256, 1.0, 1.0) == 256);
  CHECK(iso_parameter_width(256, 1.0, 1.0 / 16) == 1024);
  // 256 * sqrt(2) = 362.04; 384^2 / 2 is closer to 256^2 than 320^2 / 2.
  CHECK(iso_parameter_width(256, 1.0, 0.5) == 384);
  CHECK_THROWS_AS(iso_parameter_width(64, 0.01, 1.0), DomainError);
  CHECK_THROWS_AS(iso_parameter_width(100, 1.0, 0.5), DomainError);
}

TEST_CASE("iso-wpn widths") {
  CHECK(iso_wpn_width(256, 1.0, 0.25) == 1024);
  CHECK(iso_wpn_width(256, 1.0, 1.0) == 256);
  CHECK(iso_wpn_width(64, 1.0, 0.5) == 128);
  try {
    iso_wpn_width(256, 1.0, 0.3);
    FAIL("expected a domain error");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("residual") != std::string::npos);
  }
  const auto nearest = iso_wpn_nearest(256, 1.0, 0.3);
  CHECK(nearest.width == 832);
  CHECK(nearest.residual == doctest::Approx(832 * 0.3 - 256));
}

TEST_CASE("property: iso-wpn families keep width times density and emit equal scaling factors") {
  const BaseHyperparams base;
  for (std::size_t base_width : {64u, 128u, 256u}) {
    for (int k = 0; k <= 4; ++k) {
      const double rho = std::ldexp(1.0, -k);
      const std::size_t w = iso_wpn_width(base_width, 1.0, rho);
      CHECK(static_cast<double>(w) * rho == static_cast<double>(base_width));
      const double m_d = static_cast<double>(w) / static_cast<double>(base.d_base);
      const double m_d0 = static_cast<double>(base_width) / static_cast<double>(base.d_base);
      for (auto opt : {OptimizerKind::kAdamW, OptimizerKind::kSgd}) {
        CHECK(layer_lr(LayerRole::kHidden, ParamScheme::kSUPAR, opt, base, m_d, rho) ==
              layer_lr(LayerRole::kHidden, ParamScheme::kSUPAR, opt, base, m_d0, 1.0));
      }
      CHECK(init_std(LayerRole::kHidden, ParamScheme::kSUPAR, base, m_d, rho) ==
            init_std(LayerRole::kHidden, ParamScheme::kSUPAR, base, m_d0, 1.0));
    }
  }
}

TEST_CASE("scaling regime names round-trip") {
  for (auto r : {ScalingRegime::kFixedWidth, ScalingRegime::kIsoParameter, ScalingRegime::kIsoWpn}) {
    CHECK(regime_from_name(regime_name(r)) == r);
  }
}
