// SPDX-License-Identifier: Apache-2.0
#include "supar/variance_oracle.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include "supar/errors.hpp"
#include "supar/mask.hpp"
#include "supar/model.hpp"

namespace supar {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kBlock = 64;
constexpr std::uint64_t kWeightTag = 0x0c1e0001;
constexpr std::uint64_t kMaskTag = 0x0c1e0002;
constexpr std::uint64_t kDataTag = 0x0c1e0003;

void check_common(std::size_t fan, double rho, std::size_t samples) {
  if (fan == 0) throw ContractViolation("variance oracle: fan must be positive");
  if (!(rho > 0.0 && rho <= 1.0)) {
    std::ostringstream msg;
    msg << "variance oracle: density " << rho << " outside (0,1]";
    throw DomainError(msg.str());
  }
  if (samples < kMinOracleSamples) {
    std::ostringstream msg;
    msg << "variance oracle: " << samples << " samples, need at least " << kMinOracleSamples;
    throw ContractViolation(msg.str());
  }
}

Matrix gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double mean, double std) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = mean + std * dist(rng);
  return m;
}

Matrix masked_gaussian(std::size_t rows, std::size_t cols, double rho, double std, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ kWeightTag);
  Matrix w = gaussian(rng, rows, cols, 0.0, std);
  const auto mask = sample_random_mask(rows, cols, rho, mix_seed(seed ^ kMaskTag));
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (mask.bits[static_cast<std::size_t>(i)] == 0) w.data()[i] = 0.0;
  return w;
}

Matrix mask_matrix(std::size_t rows, std::size_t cols, double rho, std::uint64_t seed) {
  const auto mask = sample_random_mask(rows, cols, rho, mix_seed(seed ^ kMaskTag));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = mask.bits[static_cast<std::size_t>(i)];
  return m;
}

std::uint64_t replicate_seed(std::uint64_t seed, std::size_t r) { return sub_seed(seed, r, 0x0c1e); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Reduces per-replicate blocks of samples to an estimate.
McEstimate summarize(const std::vector<Matrix>& blocks, bool headline_is_mean, bool absolute) {
  McEstimate est;
  est.replicates = blocks.size();
  std::vector<double> means, vars;
  double total = 0.0;
  for (const auto& b : blocks) {
    est.samples += static_cast<std::size_t>(b.size());
    total += absolute ? b.cwiseAbs().sum() : b.sum();
  }
  const double grand = total / static_cast<double>(est.samples);
  for (const auto& b : blocks) {
    const double n = static_cast<double>(b.size());
    means.push_back((absolute ? b.cwiseAbs().sum() : b.sum()) / n);
    vars.push_back((b.array() - grand).square().sum() / n);
  }
  est.mean = grand;
  est.mean_se = se_of(means);
  est.variance = mean_of(vars);
  est.standard_error = headline_is_mean ? est.mean_se : se_of(vars);
  return est;
}

std::size_t replicate_count(std::size_t samples, std::size_t per_replicate) {
  return std::max<std::size_t>(2, (samples + per_replicate - 1) / per_replicate);
}

}  // namespace

double analytic_forward_var(std::size_t d_in, double rho, double sigma2_w, double var_x, double mean_x) {
  return static_cast<double>(d_in) * rho * sigma2_w * (var_x + mean_x * mean_x);
}

double analytic_backward_var(std::size_t d_out, double rho, double sigma2_w, double var_gy) {
  return static_cast<double>(d_out) * rho * sigma2_w * var_gy;
}

McEstimate mc_forward_var(std::size_t d_in, double rho, double sigma_w, double x_mean, double x_std,
                          std::size_t samples, std::uint64_t seed) {
  check_common(d_in, rho, samples);
  const std::size_t reps = replicate_count(samples, kBlock * kBlock);
  std::vector<Matrix> blocks;
  blocks.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const std::uint64_t s = replicate_seed(seed, r);
    const Matrix w = masked_gaussian(d_in, kBlock, rho, sigma_w, s);
    std::mt19937_64 rng(s ^ kDataTag);
    const Matrix x = gaussian(rng, kBlock, d_in, x_mean, x_std);
    blocks.push_back(x * w);
  }
  return summarize(blocks, false, false);
}

McEstimate mc_backward_var(std::size_t d_out, double rho, double sigma_w, double gy_std, std::size_t samples,
                           std::uint64_t seed) {
  check_common(d_out, rho, samples);
  const std::size_t reps = replicate_count(samples, kBlock * kBlock);
  std::vector<Matrix> blocks;
  blocks.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const std::uint64_t s = replicate_seed(seed, r);
    // W is [d_in, d_out]; the gradient flows back through its d_out fan.
    const Matrix w = masked_gaussian(kBlock, d_out, rho, sigma_w, s);
    std::mt19937_64 rng(s ^ kDataTag);
    const Matrix gy = gaussian(rng, kBlock, d_out, 0.0, gy_std);
    blocks.push_back(gy * w.transpose());
  }
  return summarize(blocks, false, false);
}

McEstimate mc_adam_delta_y(std::size_t d_in, double rho, double eta, std::size_t steps, std::size_t batch,
                           std::size_t samples, std::uint64_t seed, const AdamOracleConfig& cfg) {
  check_common(d_in, rho, samples);
  if (steps == 0) throw ContractViolation("mc_adam_delta_y: steps must be at least 1");
  if (batch == 0) throw ContractViolation("mc_adam_delta_y: batch must be positive");
  const std::size_t cols = std::max<std::size_t>(1, kBlock * kBlock / batch);
  const std::size_t reps = replicate_count(samples, batch * cols);

  // Bias-corrected EMA weights of step t as seen after the last step.
  std::vector<double> gamma(steps), omega(steps);
  const double n1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps));
  const double n2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps));
  for (std::size_t t = 0; t < steps; ++t) {
    const double age = static_cast<double>(steps - 1 - t);
    gamma[t] = (1.0 - cfg.beta1) * std::pow(cfg.beta1, age) / n1;
    omega[t] = (1.0 - cfg.beta2) * std::pow(cfg.beta2, age) / n2;
  }
  const double phi = cfg.grad_correlation;
  const double innovation = std::sqrt(1.0 - phi * phi);

  std::vector<Matrix> blocks;
  blocks.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const std::uint64_t s = replicate_seed(seed, r);
    const Matrix mask = mask_matrix(d_in, cols, rho, s);
    std::mt19937_64 rng(s ^ kDataTag);
    const Matrix x = gaussian(rng, batch, d_in, 0.0, 1.0);
    const Matrix x2 = x.cwiseProduct(x);
    Matrix g = gaussian(rng, batch, cols, 0.0, 1.0);
    Matrix first = Matrix::Zero(d_in, cols);
    Matrix second = Matrix::Zero(d_in, cols);
    for (std::size_t t = 0; t < steps; ++t) {
      if (t > 0) g = phi * g + innovation * gaussian(rng, batch, cols, 0.0, 1.0);
      first.noalias() += gamma[t] * (x.transpose() * g);
      second.noalias() += omega[t] * (x2.transpose() * g.cwiseProduct(g));
    }
    const Matrix update = first.cwiseQuotient(second.cwiseSqrt()).cwiseProduct(mask);
    blocks.push_back(eta * (x * update));
  }
  return summarize(blocks, true, true);
}

McEstimate mc_sgd_delta_y(std::size_t d_in, double rho, double eta, std::size_t batch, std::size_t samples,
                          std::uint64_t seed) {
  check_common(d_in, rho, samples);
  if (batch == 0) throw ContractViolation("mc_sgd_delta_y: batch must be positive");
  const std::size_t cols = std::max<std::size_t>(1, kBlock * kBlock / batch);
  const std::size_t reps = replicate_count(samples, batch * cols);
  std::vector<Matrix> blocks;
  blocks.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const std::uint64_t s = replicate_seed(seed, r);
    const Matrix mask = mask_matrix(d_in, cols, rho, s);
    std::mt19937_64 rng(s ^ kDataTag);
    const Matrix x = gaussian(rng, batch, d_in, 0.0, 1.0);
    const Matrix g = gaussian(rng, batch, cols, 0.0, 1.0);
    const Matrix update = (x.transpose() * g / static_cast<double>(d_in)).cwiseProduct(mask);
    blocks.push_back(eta * (x * update));
  }
  return summarize(blocks, true, true);
}

OracleGrid default_oracle_grid() {
  OracleGrid grid;
  grid.fan = {64, 256, 1024};
  grid.densities = {1.0, 0.25, 1.0 / 16.0};
  return grid;
}

namespace {

std::string point(std::size_t fan, double rho) {
  std::ostringstream out;
  out << "fan=" << fan << ";rho=" << rho;
  return out.str();
}

OracleRow se_row(std::string quantity, std::string grid_point, double analytic, const McEstimate& est,
                 double estimate, double k) {
  OracleRow row{std::move(quantity), std::move(grid_point), analytic, estimate, est.standard_error, false};
  row.pass = std::abs(estimate - analytic) <= k * est.standard_error;
  return row;
}

OracleRow ratio_row(std::string quantity, std::string grid_point, double expected, double observed, double se,
                    double tol) {
  OracleRow row{std::move(quantity), std::move(grid_point), expected, observed, se, false};
  row.pass = std::abs(observed / expected - 1.0) <= tol;
  return row;
}

}  // namespace

std::vector<OracleRow> run_oracle_suite(const OracleGrid& grid, std::uint64_t seed) {
  std::vector<OracleRow> rows;
  std::uint64_t cell = 0;
  for (std::size_t fan : grid.fan) {
    for (double rho : grid.densities) {
      // sigma_w^2 = 1/(fan * rho) keeps every cell at unit variance.
      const double s2 = 1.0 / (static_cast<double>(fan) * rho);
      const auto fwd = mc_forward_var(fan, rho, std::sqrt(s2), 0.0, 1.0, grid.samples, mix_seed(seed + ++cell));
      rows.push_back(se_row("forward_var", point(fan, rho), analytic_forward_var(fan, rho, s2, 1.0, 0.0), fwd,
                            fwd.variance, grid.tolerance_se));
      const auto bwd = mc_backward_var(fan, rho, std::sqrt(s2), 1.0, grid.samples, mix_seed(seed + ++cell));
      rows.push_back(se_row("backward_var", point(fan, rho), analytic_backward_var(fan, rho, s2, 1.0), bwd,
                            bwd.variance, grid.tolerance_se));
    }
  }

  // Update scaling. Fan-in times density stays at or above 64 so the
  // coherent part of the update dominates the per-element noise.
  const std::vector<std::size_t> update_fan{256, 512, 1024};
  const std::vector<double> update_rho{1.0, 0.5, 0.25};
  const std::size_t update_samples = std::max<std::size_t>(kMinOracleSamples, grid.samples / 5);
  const double eta_base = 1e-3;
  const double d_base = static_cast<double>(grid.d_base);
  const std::size_t steps = 2, batch = 4;

  auto adam = [&](std::size_t fan, double rho, double eta) {
    return mc_adam_delta_y(fan, rho, eta, steps, batch, update_samples, mix_seed(seed ^ 0xada0));
  };
  auto sgd = [&](std::size_t fan, double rho, double eta) {
    return mc_sgd_delta_y(fan, rho, eta, batch, update_samples, mix_seed(seed ^ 0x5cd0));
  };

  // Fixed eta: reference cell, doubling fan, halving density.
  const auto ref = adam(update_fan[1], update_rho[1], eta_base);
  const auto doubled = adam(update_fan[2], update_rho[1], eta_base);
  const auto halved_fan = adam(update_fan[0], update_rho[1], eta_base);
  const auto halved_rho = adam(update_fan[1], update_rho[2], eta_base);
  const auto doubled_rho = adam(update_fan[1], update_rho[0], eta_base);
  rows.push_back(ratio_row("adam_dy_ratio_double_fan", point(update_fan[2], update_rho[1]), 2.0,
                           doubled.mean / ref.mean, doubled.mean_se / ref.mean, grid.ratio_tolerance));
  rows.push_back(ratio_row("adam_dy_ratio_half_fan", point(update_fan[0], update_rho[1]), 0.5,
                           halved_fan.mean / ref.mean, halved_fan.mean_se / ref.mean, grid.ratio_tolerance));
  rows.push_back(ratio_row("adam_dy_ratio_half_rho", point(update_fan[1], update_rho[2]), 0.5,
                           halved_rho.mean / ref.mean, halved_rho.mean_se / ref.mean, grid.ratio_tolerance));
  rows.push_back(ratio_row("adam_dy_ratio_double_rho", point(update_fan[1], update_rho[0]), 2.0,
                           doubled_rho.mean / ref.mean, doubled_rho.mean_se / ref.mean, grid.ratio_tolerance));
  const auto eta_doubled = adam(update_fan[1], update_rho[1], 2.0 * eta_base);
  rows.push_back(ratio_row("adam_dy_ratio_double_eta", point(update_fan[1], update_rho[1]), 2.0,
                           eta_doubled.mean / ref.mean, eta_doubled.mean_se / ref.mean, grid.ratio_tolerance));

  const auto sgd_ref = sgd(update_fan[1], update_rho[1], eta_base);
  const auto sgd_half_rho = sgd(update_fan[1], update_rho[2], eta_base);
  rows.push_back(ratio_row("sgd_dy_ratio_half_rho", point(update_fan[1], update_rho[2]), 0.5,
                           sgd_half_rho.mean / sgd_ref.mean, sgd_half_rho.mean_se / sgd_ref.mean,
                           grid.ratio_tolerance));

  // Scaled eta: every cell relative to the base-width dense cell.
  const auto adam_base = adam(grid.d_base, 1.0, eta_base);
  const auto sgd_base = sgd(grid.d_base, 1.0, eta_base);
  for (std::size_t fan : update_fan) {
    for (double rho : update_rho) {
      const double m_d = static_cast<double>(fan) / d_base;
      const auto a = adam(fan, rho, eta_base / (m_d * rho));
      rows.push_back(ratio_row("adam_dy_scaled_lr", point(fan, rho), 1.0, a.mean / adam_base.mean,
                               a.mean_se / adam_base.mean, grid.ratio_tolerance));
      const auto s = sgd(fan, rho, eta_base / rho);
      rows.push_back(ratio_row("sgd_dy_scaled_lr", point(fan, rho), 1.0, s.mean / sgd_base.mean,
                               s.mean_se / sgd_base.mean, grid.ratio_tolerance));
    }
  }
  return rows;
}

void write_oracle_csv(std::ostream& out, const std::vector<OracleRow>& rows) {
  const auto precision = out.precision(17);
  out << "quantity,grid_point,analytic,mc_mean,mc_se,pass\n";
  for (const auto& r : rows)
    out << r.quantity << ',' << r.grid_point << ',' << r.analytic << ',' << r.mc_mean << ',' << r.mc_se << ','
        << (r.pass ? 1 : 0) << '\n';
  out.precision(precision);
}

}  // namespace supar
