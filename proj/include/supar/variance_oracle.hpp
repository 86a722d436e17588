// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace supar {

/// Monte-Carlo estimate over `samples` draws grouped into independent
/// replicate blocks. Standard errors come from the spread of per-replicate
/// estimates (batch means), since draws inside one block share weights or
/// inputs. `standard_error` belongs to the headline quantity: the variance
/// for the variance oracles, the mean for the update oracles.
struct McEstimate {
  double mean = 0.0;
  double variance = 0.0;
  double standard_error = 0.0;
  double mean_se = 0.0;
  std::size_t samples = 0;
  std::size_t replicates = 0;
};

inline constexpr std::size_t kMinOracleSamples = 10'000;

/// d_in * rho * sigma2_w * (var_x + mean_x^2).
double analytic_forward_var(std::size_t d_in, double rho, double sigma2_w, double var_x, double mean_x);

/// d_out * rho * sigma2_w * var_gy.
double analytic_backward_var(std::size_t d_out, double rho, double sigma2_w, double var_gy);

/// Var of Y = X (W * M) with exact-count masks, Gaussian weights and inputs.
McEstimate mc_forward_var(std::size_t d_in, double rho, double sigma_w, double x_mean, double x_std,
                          std::size_t samples, std::uint64_t seed);

/// Var of dX = dY (W * M)^T with dY independent of W.
McEstimate mc_backward_var(std::size_t d_out, double rho, double sigma_w, double gy_std, std::size_t samples,
                           std::uint64_t seed);

struct AdamOracleConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  /// Correlation between consecutive output-gradient draws.
  double grad_correlation = 0.5;
};

/// Mean |dY| for dY = eta X (dW * M), where dW is the normalized Adam
/// update accumulated over `steps` steps of a batch X reused at every step
/// and correlated output gradients. Probe rows are the batch rows.
McEstimate mc_adam_delta_y(std::size_t d_in, double rho, double eta, std::size_t steps, std::size_t batch,
                           std::size_t samples, std::uint64_t seed, const AdamOracleConfig& cfg = {});

/// Mean |dY| for one normalized SGD step dW = X^T G / d_in.
McEstimate mc_sgd_delta_y(std::size_t d_in, double rho, double eta, std::size_t batch, std::size_t samples,
                          std::uint64_t seed);

struct OracleRow {
  std::string quantity;
  std::string grid_point;
  double analytic = 0.0;
  double mc_mean = 0.0;
  double mc_se = 0.0;
  bool pass = false;
};

struct OracleGrid {
  std::vector<std::size_t> fan;
  std::vector<double> densities;
  std::size_t samples = 1'000'000;
  /// Base fan-in for the update-rule checks.
  std::size_t d_base = 256;
  double tolerance_se = 3.0;
  double ratio_tolerance = 0.10;
};

OracleGrid default_oracle_grid();

/// Forward and backward variance comparisons on the grid, plus the update
/// scaling checks (Adam and SGD) on an update grid with d_in * rho >= 64.
std::vector<OracleRow> run_oracle_suite(const OracleGrid& grid, std::uint64_t seed);

void write_oracle_csv(std::ostream& out, const std::vector<OracleRow>& rows);

}  // namespace supar
