// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "supar/config.hpp"
#include "supar/corpus.hpp"
#include "supar/dynamic_sparsity.hpp"
#include "supar/mask.hpp"
#include "supar/model.hpp"
#include "supar/optimizer.hpp"

namespace supar {

enum class ExperimentKind {
  kTrain,
  kLrSweep,
  kInitSweep,
  kCoordCheck,
  kInitScaling,
  kDeltaYProbe,
  kOracleSuite,
  kDstLrSweep,
  kIsoScalingSweep,
};

const char* kind_name(ExperimentKind kind);
ExperimentKind kind_from_name(const std::string& name);
bool is_sweep(ExperimentKind kind);

enum class Selection { kValidation, kTrain };

struct TrainSettings {
  std::size_t batch = 8;
  std::size_t steps = 300;
  std::size_t warmup = 30;
  ScheduleKind schedule = ScheduleKind::kLinearDecayToTenth;
  AdamConfig adam;
  /// SGD heavy-ball coefficient.
  double momentum = 0.9;
  std::size_t eval_batches = 8;
  /// Absolute part of the divergence rule; see loss_diverged.
  double divergence_loss = 20.0;
  /// First seed index of a train run; records set it to reproduce one seed.
  std::size_t seed_index = 0;
};

struct SweepAxes {
  /// Learning rates are 2^e for each exponent e.
  std::vector<int> lr_exponents{-10, -9, -8, -7, -6, -5, -4, -3, -2};
  std::vector<double> init_stds{0.02, 0.04, 0.08, 0.16, 0.32};
  std::vector<double> densities{1.0, 0.25, 0.0625};
  /// Empty means model.d_model only.
  std::vector<std::size_t> widths;
  std::vector<ParamScheme> schemes{ParamScheme::kSP, ParamScheme::kSUPAR};
  ScalingRegime regime = ScalingRegime::kIsoWpn;
  std::size_t base_width = 256;
  double base_density = 1.0;
  Selection select = Selection::kValidation;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kTrain;
  /// model.seed is ignored; runs derive their seeds from `seed`.
  ModelConfig model;
  TrainSettings train;
  SweepAxes sweep;
  std::size_t seeds = 1;
  std::uint64_t seed = 0;
  std::string corpus = "data/corpus.txt";
  /// Empty: $SUPAR_OUT_DIR, else "results".
  std::string out_dir;
  std::optional<DstConfig> dst;
  std::size_t probe_steps = 10;
  std::size_t oracle_samples = 1'000'000;
};

/// Every field, defaults included.
ConfigText to_config(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys and ill-typed values throw ConfigError.
ExperimentConfig experiment_from_config(const ConfigText& text);
/// Throws ConfigError (bad combinations) or DomainError (bad ranges).
void validate(const ExperimentConfig& config);

std::filesystem::path resolve_out_dir(const ExperimentConfig& config);

struct RunRecord {
  /// Resolved train config reproducing this run.
  ConfigText config;
  ExperimentKind kind = ExperimentKind::kTrain;
  ParamScheme scheme = ParamScheme::kSUPAR;
  std::size_t width = 0;
  double density = 1.0;
  double lr = 0.0;
  double init_std = 0.0;
  std::size_t seed_index = 0;
  /// Index of the swept value on its axis.
  std::size_t axis_index = 0;
  std::vector<double> train_loss;
  /// Mean training loss over the last tenth of the steps.
  double final_train_loss = 0.0;
  double val_loss = 0.0;
  double best_train_loss = 0.0;
  double wall_seconds = 0.0;
  bool diverged = false;
  std::vector<DstEvent> dst_events;
};

/// True for a non-finite loss, or one above both `limit` and twice the
/// step-0 loss.
bool loss_diverged(double loss, double initial_loss, double limit);

/// Trains one model on the corpus. The model and data-order seeds depend on
/// (config.seed, seed_index) only.
RunRecord train_run(const ExperimentConfig& config, const Corpus& corpus, std::size_t seed_index);

/// One sweep cell: a resolved config per (scheme, width, density, value).
struct SweepCell {
  ExperimentConfig config;
  double value = 0.0;
  std::size_t axis_index = 0;
};

std::vector<SweepCell> expand_sweep(const ExperimentConfig& config);

struct OptimumRow {
  ParamScheme scheme = ParamScheme::kSUPAR;
  std::size_t width = 0;
  double density = 1.0;
  std::string axis;
  double optimum = 0.0;
  std::size_t optimum_index = 0;
  double mean_loss = 0.0;
  Selection selection = Selection::kValidation;
};

/// Per (scheme, width, density): the axis value minimizing the mean loss
/// over seeds. Diverged runs count as +inf; ties go to the smaller value.
std::vector<OptimumRow> select_optima(const std::vector<RunRecord>& records, const std::string& axis,
                                      Selection selection);

struct ExperimentResult {
  std::vector<RunRecord> records;
  std::vector<OptimumRow> optima;
  std::vector<std::filesystem::path> files;
  /// Oracle comparisons outside tolerance.
  std::size_t failed_checks = 0;
};

using RecordCallback = std::function<void(const RunRecord&)>;

/// Validates, runs and writes CSV outputs into the resolved output directory.
/// Files are written to a temporary name and renamed when complete.
ExperimentResult run_experiment(const ExperimentConfig& config, const RecordCallback& on_record = {});

/// Columns: kind,scheme,width,density,lr,init_std,seed,step,metric,loss,diverged.
void write_sweep_csv(std::ostream& out, const std::vector<RunRecord>& records);
void write_optima_csv(std::ostream& out, const std::vector<OptimumRow>& rows);

/// Writes through a temporary file in the same directory, then renames.
void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body);

inline constexpr const char* kSweepSchema = "# schema: supar-sweep v1";
inline constexpr const char* kOptimaSchema = "# schema: supar-optima v1";

}  // namespace supar
