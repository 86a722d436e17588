// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "supar/errors.hpp"
#include "supar/experiment.hpp"
#include "supar/mask.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, CommonOptions& opts) {
  app->add_option("--config", opts.config_path, "Experiment config file (key = value lines)")->check(CLI::ExistingFile);
  app->add_option("--out", opts.out_dir, "Output directory (default: $SUPAR_OUT_DIR or ./results)");
  app->add_option("--seed", opts.seed, "Root seed for all randomness");
  app->add_option("--override", opts.overrides, "Dot-path override key=value (repeatable)");
}

supar::ExperimentConfig load(const CommonOptions& opts, std::optional<supar::ExperimentKind> kind) {
  supar::ConfigText text;
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) throw supar::IoError("cannot read config '" + opts.config_path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    text = supar::ConfigText::parse(buf.str());
  }
  for (const auto& o : opts.overrides) text.apply_override(o);
  auto config = supar::experiment_from_config(text);
  if (kind) config.kind = *kind;
  if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
  if (opts.seed) config.seed = *opts.seed;
  return config;
}

void print_record(const supar::RunRecord& r) {
  std::cerr << supar::scheme_name(r.scheme) << " width " << r.width << " density " << r.density << " lr " << r.lr
            << " init " << r.init_std << " seed " << r.seed_index << ": ";
  if (r.diverged)
    std::cerr << "diverged\n";
  else
    std::cerr << "train " << r.final_train_loss << " val " << r.val_loss << " (" << r.wall_seconds << " s)\n";
}

int run(const supar::ExperimentConfig& config) {
  const auto result = supar::run_experiment(config, print_record);
  for (const auto& row : result.optima)
    std::cout << "optimum " << supar::scheme_name(row.scheme) << " width " << row.width << " density "
              << row.density << " " << row.axis << " " << row.optimum << " (index " << row.optimum_index
              << ", loss " << row.mean_loss << ")\n";
  for (const auto& f : result.files) std::cout << "wrote " << f.string() << '\n';
  if (result.failed_checks > 0) {
    std::cerr << result.failed_checks << " oracle comparisons outside tolerance\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-aware parameterization laboratory"};
  app.require_subcommand(1);

  CommonOptions train_opts, sweep_opts, coord_opts, oracle_opts, dst_opts;
  auto* train = app.add_subcommand("train", "Train one model per seed");
  add_common(train, train_opts);

  auto* sweep = app.add_subcommand("sweep", "Run an lr-, init- or iso-scaling sweep");
  add_common(sweep, sweep_opts);
  std::string sweep_kind;
  sweep->add_option("--kind", sweep_kind, "lr-sweep, init-sweep or iso-scaling-sweep (default: config kind)");

  auto* coord = app.add_subcommand("coordcheck", "Coordinate check, init scaling table or delta-y probe");
  add_common(coord, coord_opts);
  std::string coord_mode = "coord-check";
  coord->add_option("--mode", coord_mode, "coord-check, init-scaling or delta-y-probe")
      ->check(CLI::IsMember({"coord-check", "init-scaling", "delta-y-probe"}));

  auto* oracle = app.add_subcommand("oracle", "Monte-Carlo variance and update oracles");
  add_common(oracle, oracle_opts);
  std::optional<std::size_t> samples;
  oracle->add_option("--samples", samples, "Samples per variance cell");

  auto* dst = app.add_subcommand("dst", "Learning-rate sweep under dynamic sparsity");
  add_common(dst, dst_opts);
  std::string dst_method;
  dst->add_option("--method", dst_method, "rigl or gmp (default: config dst.method)")
      ->check(CLI::IsMember({"rigl", "gmp"}));

  auto* scale = app.add_subcommand("scale", "Width of a point in a scaling family");
  std::string regime;
  std::size_t base_width = 256, head = 64;
  double density = 1.0, base_density = 1.0;
  scale->add_option("--regime", regime, "fixed-width, iso-parameter or iso-wpn")->required();
  scale->add_option("--base-width", base_width, "Base width")->required();
  scale->add_option("--density", density, "Target density")->required();
  scale->add_option("--base-density", base_density, "Base density");
  scale->add_option("--head-size", head, "Width lattice step");

  CLI11_PARSE(app, argc, argv);

  try {
    using supar::ExperimentKind;
    if (*train) return run(load(train_opts, ExperimentKind::kTrain));
    if (*sweep) {
      auto config = load(sweep_opts, std::nullopt);
      if (!sweep_kind.empty()) config.kind = supar::kind_from_name(sweep_kind);
      if (config.kind == ExperimentKind::kTrain) config.kind = ExperimentKind::kLrSweep;
      if (!supar::is_sweep(config.kind) || config.kind == ExperimentKind::kDstLrSweep)
        throw supar::ConfigError(std::string("sweep cannot run kind '") + supar::kind_name(config.kind) + "'");
      return run(config);
    }
    if (*coord) return run(load(coord_opts, supar::kind_from_name(coord_mode)));
    if (*oracle) {
      auto config = load(oracle_opts, ExperimentKind::kOracleSuite);
      if (samples) config.oracle_samples = *samples;
      return run(config);
    }
    if (*dst) {
      auto config = load(dst_opts, ExperimentKind::kDstLrSweep);
      if (!dst_method.empty()) {
        if (!config.dst) config.dst = supar::DstConfig{};
        config.dst->method = supar::dst_method_from_name(dst_method);
      }
      return run(config);
    }
    if (*scale) {
      const auto r = supar::regime_from_name(regime);
      std::size_t width = base_width;
      if (r == supar::ScalingRegime::kIsoParameter) {
        width = supar::iso_parameter_width(base_width, base_density, density, head);
      } else if (r == supar::ScalingRegime::kIsoWpn) {
        width = supar::iso_wpn_width(base_width, base_density, density, head);
      }
      std::cout << width << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
