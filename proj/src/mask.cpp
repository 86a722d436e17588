// SPDX-License-Identifier: Apache-2.0
#include "supar/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "supar/errors.hpp"

namespace supar {

namespace {

void check_density(double density, const char* what) {
  if (!(density > 0.0 && density <= 1.0)) {
    std::ostringstream msg;
    msg << what << ": density " << density << " outside (0, 1]";
    throw DomainError(msg.str());
  }
}

}  // namespace

std::size_t SparsityMask::ones() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::size_t mask_count(std::size_t numel, double density) {
  return static_cast<std::size_t>(std::llround(density * static_cast<double>(numel)));
}

SparsityMask sample_random_mask(std::size_t d_in, std::size_t d_out, double density, std::uint64_t seed) {
  check_density(density, "sample_random_mask");
  if (d_in == 0 || d_out == 0) throw ContractViolation("sample_random_mask: extents must be positive");
  const std::size_t n = d_in * d_out;
  const std::size_t k = mask_count(n, density);
  if (k == 0) {
    std::ostringstream msg;
    msg << "sample_random_mask: density " << density << " leaves no active position in " << d_in << "x" << d_out;
    throw DegenerateMask(msg.str());
  }
  SparsityMask mask{d_in, d_out, density, seed, std::vector<std::uint8_t>(n, 0)};
  if (k == n) {
    std::fill(mask.bits.begin(), mask.bits.end(), 1);
    return mask;
  }
  // Partial Fisher-Yates: the first k slots of a random permutation.
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(perm[i], perm[pick(rng)]);
    mask.bits[perm[i]] = 1;
  }
  return mask;
}

SparsityMask dense_mask(std::size_t d_in, std::size_t d_out) {
  return SparsityMask{d_in, d_out, 1.0, 0, std::vector<std::uint8_t>(d_in * d_out, 1)};
}

MaskStats mask_stats(const SparsityMask& mask) {
  if (mask.bits.size() != mask.numel()) throw ContractViolation("mask_stats: bit buffer does not match shape");
  MaskStats stats;
  stats.per_column_counts.assign(mask.d_out, 0);
  stats.per_row_counts.assign(mask.d_in, 0);
  std::size_t ones = 0;
  for (std::size_t r = 0; r < mask.d_in; ++r) {
    for (std::size_t c = 0; c < mask.d_out; ++c) {
      if (mask.bits[r * mask.d_out + c]) {
        ++stats.per_column_counts[c];
        ++stats.per_row_counts[r];
        ++ones;
      }
    }
  }
  stats.density = static_cast<double>(ones) / static_cast<double>(mask.numel());
  return stats;
}

const char* regime_name(ScalingRegime regime) {
  switch (regime) {
    case ScalingRegime::kFixedWidth: return "fixed-width";
    case ScalingRegime::kIsoParameter: return "iso-parameter";
    case ScalingRegime::kIsoWpn: return "iso-wpn";
  }
  return "?";
}

ScalingRegime regime_from_name(const std::string& name) {
  if (name == "fixed-width") return ScalingRegime::kFixedWidth;
  if (name == "iso-parameter") return ScalingRegime::kIsoParameter;
  if (name == "iso-wpn") return ScalingRegime::kIsoWpn;
  throw ConfigError("unknown scaling regime '" + name + "'");
}

std::size_t iso_parameter_width(std::size_t base_width, double base_density, double target_density,
                                std::size_t head_size) {
  check_density(base_density, "iso_parameter_width");
  check_density(target_density, "iso_parameter_width");
  if (head_size == 0 || base_width % head_size != 0) {
    throw DomainError("iso_parameter_width: base width must be a positive multiple of the head size");
  }
  const double b = static_cast<double>(base_width);
  const double goal = b * b * base_density;
  const double ideal = b * std::sqrt(base_density / target_density);
  const double h = static_cast<double>(head_size);
  const double lo = std::floor(ideal / h) * h;
  const double hi = lo + h;
  auto miss = [&](double w) { return std::abs(w * w * target_density - goal); };
  const double best = miss(hi) < miss(lo) ? hi : lo;
  if (best < h) {
    std::ostringstream msg;
    msg << "iso_parameter_width: width " << best << " is below the head size " << head_size;
    throw DomainError(msg.str());
  }
  return static_cast<std::size_t>(best);
}

IsoWpnWidth iso_wpn_nearest(std::size_t base_width, double base_density, double target_density,
                            std::size_t head_size) {
  check_density(base_density, "iso_wpn_width");
  check_density(target_density, "iso_wpn_width");
  if (head_size == 0 || base_width % head_size != 0) {
    throw DomainError("iso_wpn_width: base width must be a positive multiple of the head size");
  }
  const double wpn = static_cast<double>(base_width) * base_density;
  const double h = static_cast<double>(head_size);
  const double width = std::max(h, std::round(wpn / target_density / h) * h);
  return {static_cast<std::size_t>(width), width * target_density - wpn};
}

std::size_t iso_wpn_width(std::size_t base_width, double base_density, double target_density,
                          std::size_t head_size) {
  const auto point = iso_wpn_nearest(base_width, base_density, target_density, head_size);
  const double wpn = static_cast<double>(base_width) * base_density;
  if (std::abs(point.residual) > 1e-12 * wpn) {
    std::ostringstream msg;
    msg << "iso_wpn_width: no multiple of " << head_size << " keeps width*density = " << wpn << " at density "
        << target_density << "; nearest width " << point.width << " has residual " << point.residual;
    throw DomainError(msg.str());
  }
  return point.width;
}

}  // namespace supar
