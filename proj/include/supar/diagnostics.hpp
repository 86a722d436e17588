// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "supar/corpus.hpp"
#include "supar/model.hpp"
#include "supar/optimizer.hpp"

namespace supar {

/// Grid of (scheme, width, density) cells plus the shared model shape.
struct CoordCheckPlan {
  std::vector<ParamScheme> schemes{ParamScheme::kSP, ParamScheme::kMUP, ParamScheme::kSUPAR};
  std::vector<std::size_t> widths{128, 256};
  std::vector<double> densities{1.0, 0.25, 0.0625};
  std::size_t seeds = 10;
  std::size_t steps = 10;
  std::size_t batch = 4;
  std::size_t seq_len = 64;
  std::size_t n_layers = 2;
  std::size_t d_head = 32;
  BaseHyperparams base;
  AdamConfig adam;
  std::uint64_t seed = 0;
  double flatness_threshold = 2.0;
};

/// Throws ContractViolation on an empty axis, zero seeds or a single-cell grid.
void validate(const CoordCheckPlan& plan);

/// Model configuration of one grid cell and seed index.
ModelConfig cell_config(const CoordCheckPlan& plan, ParamScheme scheme, std::size_t width, double density,
                        std::size_t seed_index);

/// One measurement. `block` names the measurement point, e.g. "attn.proj".
struct StatRow {
  ParamScheme scheme = ParamScheme::kSUPAR;
  std::size_t width = 0;
  double density = 1.0;
  std::size_t layer = 0;
  std::string block;
  std::size_t step = 0;
  std::size_t seed = 0;
  double stat = 0.0;
};

/// Mean and sample std over seeds of one (cell, layer, block, step).
struct StatSummary {
  ParamScheme scheme = ParamScheme::kSUPAR;
  std::size_t width = 0;
  double density = 1.0;
  std::size_t layer = 0;
  std::string block;
  std::size_t step = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t seeds = 0;
};

struct DivergedRun {
  ParamScheme scheme = ParamScheme::kSUPAR;
  std::size_t width = 0;
  double density = 1.0;
  std::size_t seed = 0;
  std::size_t step = 0;
};

struct DiagnosticReport {
  std::vector<StatRow> rows;
  std::vector<StatSummary> summary;
  std::vector<DivergedRun> diverged;
  /// max/min over grid cells of the seed-mean statistic at the final step,
  /// maximized over layers and headline blocks.
  std::map<ParamScheme, double> flatness;
};

/// Measurement points used for flatness: outputs of the projections that
/// read a normalized input.
inline const std::vector<std::string> kActivationBlocks{"attn.proj", "ffn.proj"};
/// Backward gain mean|grad X| / mean|grad Y| across the attention output and
/// FFN down projections.
inline const std::vector<std::string> kGradientBlocks{"attn.grad_gain", "ffn.grad_gain"};

using BatchSource = std::function<Batch(std::size_t step)>;

/// Trains every cell for plan.steps AdamW steps on batches from `train`
/// (identical order for all cells) and records forward statistics on
/// `probe` before the first step and after every step.
DiagnosticReport coord_check(const CoordCheckPlan& plan, const BatchSource& train, const Batch& probe);

/// Uses a window sampler over the training split seeded by plan.seed and the
/// first validation window batch as the probe.
DiagnosticReport coord_check(const CoordCheckPlan& plan, const Corpus& corpus);

/// Step-0 forward and backward statistics on `probe`, no optimizer.
DiagnosticReport init_scaling_table(const CoordCheckPlan& plan, const Batch& probe);

/// Mean |Y_after - Y_before| per hidden tensor on a frozen batch after
/// `plan.steps` AdamW steps on that same batch. Blocks are tensor names.
DiagnosticReport delta_y_probe(const CoordCheckPlan& plan, const Batch& batch);

std::vector<StatSummary> summarize(const std::vector<StatRow>& rows);

/// Flatness of one scheme at one step over the given blocks, or 0 when
/// fewer than two cells carry data.
double flatness_ratio(const std::vector<StatSummary>& summary, ParamScheme scheme, std::size_t step,
                      const std::vector<std::string>& blocks);

/// Seed-mean statistic of one cell averaged over layers and blocks.
double cell_mean(const std::vector<StatSummary>& summary, ParamScheme scheme, std::size_t width, double density,
                 std::size_t step, const std::vector<std::string>& blocks);

/// Columns: scheme,width,density,layer,block,step,seed,stat.
void write_stat_csv(std::ostream& out, const std::vector<StatRow>& rows);

}  // namespace supar
