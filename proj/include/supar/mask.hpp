// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace supar {

/// Binary pattern over a [d_in, d_out] weight. Bits are row-major and never
/// stored outside memory: (d_in, d_out, density, seed) regenerates them.
struct SparsityMask {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  double density = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> bits;

  std::size_t numel() const { return d_in * d_out; }
  std::size_t ones() const;
  bool operator==(const SparsityMask&) const = default;
};

/// Number of active positions for a density: round(density * numel).
std::size_t mask_count(std::size_t numel, double density);

/// Exactly round(density * d_in * d_out) ones, uniformly placed without
/// replacement over the whole tensor.
SparsityMask sample_random_mask(std::size_t d_in, std::size_t d_out, double density, std::uint64_t seed);

SparsityMask dense_mask(std::size_t d_in, std::size_t d_out);

struct MaskStats {
  double density = 0.0;
  std::vector<std::size_t> per_column_counts;
  std::vector<std::size_t> per_row_counts;
};

MaskStats mask_stats(const SparsityMask& mask);

enum class ScalingRegime { kFixedWidth, kIsoParameter, kIsoWpn };

const char* regime_name(ScalingRegime regime);
ScalingRegime regime_from_name(const std::string& name);

struct ScalingPoint {
  std::size_t width = 0;
  double density = 1.0;
  ScalingRegime regime = ScalingRegime::kFixedWidth;
};

/// Width keeping width^2 * density closest to the base value, on the
/// head-size lattice.
std::size_t iso_parameter_width(std::size_t base_width, double base_density, double target_density,
                                std::size_t head_size = 64);

struct IsoWpnWidth {
  std::size_t width = 0;
  /// width * target_density - base_width * base_density.
  double residual = 0.0;
};

/// Nearest head-size multiple to base_width * base_density / target_density,
/// together with its rounding residual.
IsoWpnWidth iso_wpn_nearest(std::size_t base_width, double base_density, double target_density,
                            std::size_t head_size = 64);

/// Exact iso-WPN width; throws DomainError carrying the residual when the
/// family point is not realizable on the head-size lattice.
std::size_t iso_wpn_width(std::size_t base_width, double base_density, double target_density,
                          std::size_t head_size = 64);

}  // namespace supar
