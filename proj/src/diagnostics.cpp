// SPDX-License-Identifier: Apache-2.0
#include "supar/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <tuple>

#include "supar/errors.hpp"

namespace supar {

void validate(const CoordCheckPlan& plan) {
  if (plan.schemes.empty() || plan.widths.empty() || plan.densities.empty())
    throw ContractViolation("coord-check plan: scheme, width and density lists must be nonempty");
  if (plan.seeds == 0) throw ContractViolation("coord-check plan: seeds must be positive");
  if (plan.widths.size() < 2 && plan.densities.size() < 2)
    throw ContractViolation("coord-check plan: a single (width, density) cell has nothing to compare");
  if (plan.batch == 0 || plan.seq_len == 0) throw ContractViolation("coord-check plan: batch and seq_len must be positive");
  for (const auto w : plan.widths) validate(cell_config(plan, plan.schemes.front(), w, plan.densities.front(), 0));
  for (const auto r : plan.densities) validate(cell_config(plan, plan.schemes.front(), plan.widths.front(), r, 0));
}

ModelConfig cell_config(const CoordCheckPlan& plan, ParamScheme scheme, std::size_t width, double density,
                        std::size_t seed_index) {
  ModelConfig c;
  c.d_model = width;
  c.n_layers = plan.n_layers;
  c.d_head = plan.d_head;
  c.seq_len = plan.seq_len;
  c.density = density;
  c.scheme = scheme;
  c.optimizer = OptimizerKind::kAdamW;
  c.base = plan.base;
  c.seed = sub_seed(plan.seed, seed_index, 0xc0de);
  return c;
}

namespace {

struct Cell {
  ParamScheme scheme;
  std::size_t width;
  double density;
};

std::vector<Cell> cells(const CoordCheckPlan& plan) {
  std::vector<Cell> out;
  for (auto s : plan.schemes)
    for (auto w : plan.widths)
      for (auto r : plan.densities) out.push_back({s, w, r});
  return out;
}

void push_forward_stats(std::vector<StatRow>& rows, const Cell& cell, std::size_t seed, std::size_t step,
                        const std::vector<BlockStats>& stats) {
  for (std::size_t l = 0; l < stats.size(); ++l) {
    const auto& s = stats[l];
    for (auto [block, value] : {std::pair<const char*, double>{"attn.proj", s.attn_proj},
                                {"ffn.proj", s.ffn_proj},
                                {"attn.out", s.attn_out},
                                {"ffn.out", s.ffn_out},
                                {"attn.resid", s.attn_resid},
                                {"ffn.resid", s.ffn_resid}})
      rows.push_back({cell.scheme, cell.width, cell.density, l, block, step, seed, value});
  }
}

double grad_mean_abs(const Tensor<double>& t) { return mean_abs<double>(t.grad()); }

void finish(DiagnosticReport& report, const CoordCheckPlan& plan, std::size_t final_step,
            const std::vector<std::string>& blocks) {
  report.summary = summarize(report.rows);
  for (auto s : plan.schemes) report.flatness[s] = flatness_ratio(report.summary, s, final_step, blocks);
}

Batch slice_probe(const Batch& probe, std::size_t len) {
  if (probe.len < len || probe.batch == 0) throw ContractViolation("probe batch shorter than the plan's seq_len");
  if (probe.len == len) return probe;
  Batch b{{}, {}, probe.batch, len};
  for (std::size_t i = 0; i < probe.batch; ++i) {
    b.tokens.insert(b.tokens.end(), probe.tokens.begin() + i * probe.len, probe.tokens.begin() + i * probe.len + len);
    b.targets.insert(b.targets.end(), probe.targets.begin() + i * probe.len,
                     probe.targets.begin() + i * probe.len + len);
  }
  return b;
}

}  // namespace

DiagnosticReport coord_check(const CoordCheckPlan& plan, const BatchSource& train, const Batch& probe_in) {
  validate(plan);
  const Batch probe = slice_probe(probe_in, plan.seq_len);
  std::vector<Batch> batches;
  for (std::size_t t = 0; t < plan.steps; ++t) batches.push_back(train(t));

  DiagnosticReport report;
  for (const auto& cell : cells(plan)) {
    for (std::size_t seed = 0; seed < plan.seeds; ++seed) {
      auto model = build_model<double>(cell_config(plan, cell.scheme, cell.width, cell.density, seed));
      auto state = AdamState<double>::zeros_like(model);
      std::vector<StatRow> rows;
      bool diverged = false;
      for (std::size_t step = 0; step <= plan.steps && !diverged; ++step) {
        {
          Tape<double> tape;
          const auto r = forward_loss(model, tape, probe.tokens, probe.targets, probe.batch, probe.len);
          push_forward_stats(rows, cell, seed, step, r.stats);
        }
        if (step == plan.steps) break;
        const auto& b = batches[step];
        for (auto& p : model.params) p.value.zero_grad();
        Tape<double> tape;
        const auto r = forward_loss(model, tape, b.tokens, b.targets, b.batch, b.len);
        if (!std::isfinite(r.loss.item())) {
          report.diverged.push_back({cell.scheme, cell.width, cell.density, seed, step});
          diverged = true;
          break;
        }
        tape.backward(r.loss);
        adamw_step(model, state, 1.0, plan.adam);
      }
      if (!diverged) report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    }
  }
  finish(report, plan, plan.steps, kActivationBlocks);
  return report;
}

DiagnosticReport coord_check(const CoordCheckPlan& plan, const Corpus& corpus) {
  WindowSampler sampler(corpus.train(), plan.batch, plan.seq_len, mix_seed(plan.seed));
  std::vector<Batch> batches;
  for (std::size_t t = 0; t < plan.steps; ++t) batches.push_back(sampler.next());
  const auto probe = evaluation_batches(corpus.validation(), plan.batch, plan.seq_len, 1).front();
  return coord_check(plan, [&](std::size_t t) { return batches.at(t); }, probe);
}

DiagnosticReport init_scaling_table(const CoordCheckPlan& plan, const Batch& probe_in) {
  validate(plan);
  const Batch probe = slice_probe(probe_in, plan.seq_len);
  DiagnosticReport report;
  for (const auto& cell : cells(plan)) {
    for (std::size_t seed = 0; seed < plan.seeds; ++seed) {
      auto model = build_model<double>(cell_config(plan, cell.scheme, cell.width, cell.density, seed));
      Tape<double> tape;
      const auto r = forward_loss(model, tape, probe.tokens, probe.targets, probe.batch, probe.len);
      if (!std::isfinite(r.loss.item())) {
        report.diverged.push_back({cell.scheme, cell.width, cell.density, seed, 0});
        continue;
      }
      tape.backward(r.loss);
      push_forward_stats(report.rows, cell, seed, 0, r.stats);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& s = model.layers[l];
        auto push = [&](const char* block, double value) {
          report.rows.push_back({cell.scheme, cell.width, cell.density, l, block, 0, seed, value});
        };
        push("attn.grad_in", grad_mean_abs(r.proj_in[s.wq]));
        push("ffn.grad_in", grad_mean_abs(r.proj_in[s.w1]));
        push("attn.grad_gain", grad_mean_abs(r.proj_in[s.wo]) / grad_mean_abs(r.proj_out[s.wo]));
        push("ffn.grad_gain", grad_mean_abs(r.proj_in[s.w2]) / grad_mean_abs(r.proj_out[s.w2]));
      }
    }
  }
  finish(report, plan, 0, kActivationBlocks);
  return report;
}

DiagnosticReport delta_y_probe(const CoordCheckPlan& plan, const Batch& batch_in) {
  validate(plan);
  const Batch b = slice_probe(batch_in, plan.seq_len);
  DiagnosticReport report;
  std::vector<std::string> blocks;
  for (const auto& cell : cells(plan)) {
    for (std::size_t seed = 0; seed < plan.seeds; ++seed) {
      auto model = build_model<double>(cell_config(plan, cell.scheme, cell.width, cell.density, seed));
      auto outputs = [&] {
        Tape<double> tape;
        const auto r = forward_loss(model, tape, b.tokens, b.targets, b.batch, b.len);
        std::vector<std::vector<double>> ys(model.params.size());
        for (std::size_t i = 0; i < ys.size(); ++i)
          if (r.proj_out[i].defined()) ys[i].assign(r.proj_out[i].data().begin(), r.proj_out[i].data().end());
        return ys;
      };
      const auto before = outputs();
      auto state = AdamState<double>::zeros_like(model);
      bool diverged = false;
      for (std::size_t step = 0; step < plan.steps; ++step) {
        for (auto& p : model.params) p.value.zero_grad();
        Tape<double> tape;
        const auto r = forward_loss(model, tape, b.tokens, b.targets, b.batch, b.len);
        if (!std::isfinite(r.loss.item())) {
          report.diverged.push_back({cell.scheme, cell.width, cell.density, seed, step});
          diverged = true;
          break;
        }
        tape.backward(r.loss);
        adamw_step(model, state, 1.0, plan.adam);
      }
      if (diverged) continue;
      const auto after = outputs();
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& s = model.layers[l];
        for (auto [name, slot] : {std::pair<const char*, std::size_t>{"wq", s.wq},
                                  {"wk", s.wk},
                                  {"wv", s.wv},
                                  {"wo", s.wo},
                                  {"w1", s.w1},
                                  {"w3", s.w3},
                                  {"w2", s.w2}}) {
          double total = 0.0;
          for (std::size_t i = 0; i < after[slot].size(); ++i) total += std::abs(after[slot][i] - before[slot][i]);
          const double value = total / static_cast<double>(after[slot].size());
          report.rows.push_back({cell.scheme, cell.width, cell.density, l, name, plan.steps, seed, value});
          if (std::find(blocks.begin(), blocks.end(), name) == blocks.end()) blocks.emplace_back(name);
        }
      }
    }
  }
  finish(report, plan, plan.steps, blocks);
  return report;
}

std::vector<StatSummary> summarize(const std::vector<StatRow>& rows) {
  using Key = std::tuple<int, std::size_t, double, std::size_t, std::string, std::size_t>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : rows)
    groups[{static_cast<int>(r.scheme), r.width, r.density, r.layer, r.block, r.step}].push_back(r.stat);
  std::vector<StatSummary> out;
  for (const auto& [key, values] : groups) {
    StatSummary s;
    s.scheme = static_cast<ParamScheme>(std::get<0>(key));
    s.width = std::get<1>(key);
    s.density = std::get<2>(key);
    s.layer = std::get<3>(key);
    s.block = std::get<4>(key);
    s.step = std::get<5>(key);
    s.seeds = values.size();
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
      for (double v : values) s.std += (v - s.mean) * (v - s.mean);
      s.std = std::sqrt(s.std / static_cast<double>(values.size() - 1));
    }
    out.push_back(std::move(s));
  }
  return out;
}

double flatness_ratio(const std::vector<StatSummary>& summary, ParamScheme scheme, std::size_t step,
                      const std::vector<std::string>& blocks) {
  // (layer, block) -> seed means over cells.
  std::map<std::pair<std::size_t, std::string>, std::vector<double>> series;
  for (const auto& s : summary) {
    if (s.scheme != scheme || s.step != step) continue;
    if (std::find(blocks.begin(), blocks.end(), s.block) == blocks.end()) continue;
    series[{s.layer, s.block}].push_back(s.mean);
  }
  double worst = 0.0;
  for (const auto& [key, values] : series) {
    if (values.size() < 2) continue;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    worst = std::max(worst, *lo > 0.0 ? *hi / *lo : INFINITY);
  }
  return worst;
}

double cell_mean(const std::vector<StatSummary>& summary, ParamScheme scheme, std::size_t width, double density,
                 std::size_t step, const std::vector<std::string>& blocks) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : summary) {
    if (s.scheme != scheme || s.width != width || s.density != density || s.step != step) continue;
    if (std::find(blocks.begin(), blocks.end(), s.block) == blocks.end()) continue;
    total += s.mean;
    ++n;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

void write_stat_csv(std::ostream& out, const std::vector<StatRow>& rows) {
  const auto precision = out.precision(17);
  out << "scheme,width,density,layer,block,step,seed,stat\n";
  for (const auto& r : rows)
    out << scheme_name(r.scheme) << ',' << r.width << ',' << r.density << ',' << r.layer << ',' << r.block << ','
        << r.step << ',' << r.seed << ',' << r.stat << '\n';
  out.precision(precision);
}

}  // namespace supar
