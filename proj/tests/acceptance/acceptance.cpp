// SPDX-License-Identifier: Apache-2.0
// Acceptance checks. One PASS/FAIL line per criterion on stdout; progress
// goes to stderr. Exit status is nonzero when any selected criterion fails.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "supar/diagnostics.hpp"
#include "supar/dynamic_sparsity.hpp"
#include "supar/experiment.hpp"
#include "supar/variance_oracle.hpp"
#include "support/random_graphs.hpp"
#include "support/tiny_transformer.hpp"

using namespace supar;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string corpus = "data/corpus.txt";
  std::size_t lr_seeds = 3;
  std::size_t lr_steps = 300;
  std::size_t lr_seq_len = 64;
  std::size_t iso_seeds = 1;
  std::size_t iso_steps = 150;
  int iso_lr_min = -14;
  int iso_lr_max = -6;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

// 1 ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Stopwatch clock;
  double worst = 0.0;
  std::size_t graphs = 0;
  for (std::uint64_t seed = 0; seed < 120; ++seed, ++graphs) {
    auto g = testing::make_random_graph(seed);
    worst = std::max(worst, grad_check(g.builder, g.reference, g.inputs, 1e-6));
  }
  double worst_tiny = 0.0;
  for (auto scheme : {ParamScheme::kSP, ParamScheme::kMUP, ParamScheme::kSUPAR}) {
    auto t = testing::make_tiny_transformer(scheme, 0.5, 0);
    worst_tiny = std::max(worst_tiny, grad_check(t.builder, t.reference, t.model.values(), 1e-6));
  }
  const double secs = clock.seconds();
  return {std::max(worst, worst_tiny) < 1e-5 && secs < 60.0,
          std::to_string(graphs) + " graphs worst " + fmt(worst) + ", tiny transformer (SP/MUP/SUPAR) worst " +
              fmt(worst_tiny) + " (bound 1e-5), " + fmt(secs, 3) + " s (bound 60 s)"};
}

// 2-4 -------------------------------------------------------------------------

Outcome oracle_rows(const std::string& prefix, double time_bound) {
  Stopwatch clock;
  const auto rows = run_oracle_suite(default_oracle_grid(), 0);
  const double secs = clock.seconds();
  std::size_t n = 0, failed = 0;
  double worst = 0.0;
  std::string worst_point;
  for (const auto& r : rows) {
    if (r.quantity.rfind(prefix, 0) != 0) continue;
    ++n;
    if (!r.pass) ++failed;
    const bool ratio = r.quantity.find("_dy_") != std::string::npos;
    const double dev = ratio ? std::abs(r.mc_mean / r.analytic - 1.0) : std::abs(r.mc_mean - r.analytic) / r.mc_se;
    if (dev > worst) {
      worst = dev;
      worst_point = r.quantity + " " + r.grid_point;
    }
  }
  const bool relative = prefix.find("_dy") != std::string::npos;
  std::string detail = std::to_string(n - failed) + "/" + std::to_string(n) + " cells within tolerance, worst " +
                       (relative ? fmt(100.0 * worst, 3) + "% (bound 10%)" : fmt(worst) + " SE (bound 3)") + " at " + worst_point + ", suite " + fmt(secs, 3) + " s (bound " +
                       fmt(time_bound) + " s)";
  return {n > 0 && failed == 0 && secs < time_bound, detail};
}

Outcome forward_oracle() { return oracle_rows("forward_var", 120.0); }
Outcome backward_oracle() { return oracle_rows("backward_var", 120.0); }

Outcome update_oracle() {
  auto adam = oracle_rows("adam_dy", 300.0);
  auto sgd = oracle_rows("sgd_dy", 300.0);
  return {adam.pass && sgd.pass, "Adam: " + adam.detail + "; SGD: " + sgd.detail};
}

// 5 ---------------------------------------------------------------------------

ExperimentConfig small_train(const std::string& corpus, ParamScheme scheme, double density, std::size_t steps) {
  ExperimentConfig c;
  c.kind = ExperimentKind::kTrain;
  c.corpus = corpus;
  c.model.d_model = 128;
  c.model.d_head = 32;
  c.model.seq_len = 64;
  c.model.scheme = scheme;
  c.model.density = density;
  c.train.batch = 4;
  c.train.steps = steps;
  c.train.warmup = steps / 10;
  c.train.eval_batches = 2;
  c.seed = 11;
  return c;
}

Outcome scheme_collapse(const Options& opt) {
  ModelConfig mc;
  mc.d_model = 128;
  mc.d_head = 32;
  mc.seq_len = 64;
  mc.density = 1.0;
  mc.seed = 42;
  mc.scheme = ParamScheme::kSUPAR;
  const auto a = build_model<double>(mc);
  mc.scheme = ParamScheme::kMUP;
  const auto b = build_model<double>(mc);
  bool models = a.params.size() == b.params.size() && bit_equal(a.attn_scale, b.attn_scale) &&
                bit_equal(a.embed_multiplier, b.embed_multiplier) &&
                bit_equal(a.unembed_multiplier, b.unembed_multiplier);
  bool lrs = models;
  for (std::size_t i = 0; models && i < a.params.size(); ++i) {
    models = models && bit_equal(a.params[i].value.data(), b.params[i].value.data()) &&
             bit_equal(a.params[i].init_std, b.params[i].init_std);
    lrs = lrs && bit_equal(a.params[i].lr, b.params[i].lr);
  }

  const auto corpus = load_corpus(opt.corpus);
  const auto ra = train_run(small_train(opt.corpus, ParamScheme::kSUPAR, 1.0, 50), corpus, 0);
  const auto rb = train_run(small_train(opt.corpus, ParamScheme::kMUP, 1.0, 50), corpus, 0);
  const bool traj = ra.train_loss.size() == 50 && bit_equal(ra.train_loss, rb.train_loss) &&
                    bit_equal(ra.val_loss, rb.val_loss);
  return {models && lrs && traj, std::string("width 128 density 1: models ") + (models ? "identical" : "differ") +
                                     ", learning rates " + (lrs ? "identical" : "differ") + ", 50-step losses " +
                                     (traj ? "identical" : "differ") + " (final " + fmt(ra.train_loss.back(), 8) +
                                     ")"};
}

// 6-7 -------------------------------------------------------------------------

CoordCheckPlan grid_plan() {
  CoordCheckPlan plan;
  plan.widths = {128, 256, 512};
  plan.densities = {1.0, 0.25, 0.0625};
  plan.seeds = 10;
  plan.steps = 10;
  plan.batch = 4;
  plan.seq_len = 64;
  plan.d_head = 32;
  return plan;
}

Outcome init_table(const Options& opt) {
  Stopwatch clock;
  const auto corpus = load_corpus(opt.corpus);
  auto plan = grid_plan();
  plan.schemes = {ParamScheme::kSP, ParamScheme::kSUPAR};
  const auto probe = evaluation_batches(corpus.validation(), plan.batch, plan.seq_len, 1).front();
  const auto report = init_scaling_table(plan, probe);
  const double act = flatness_ratio(report.summary, ParamScheme::kSUPAR, 0, kActivationBlocks);
  const double grad = flatness_ratio(report.summary, ParamScheme::kSUPAR, 0, kGradientBlocks);

  // SP at fixed width: activation(rho) / activation(1) against sqrt(rho).
  double worst_sp = 0.0;
  std::string worst_cell;
  for (auto w : plan.widths) {
    const double dense = cell_mean(report.summary, ParamScheme::kSP, w, 1.0, 0, kActivationBlocks);
    for (double rho : plan.densities) {
      if (rho == 1.0) continue;
      const double ratio = cell_mean(report.summary, ParamScheme::kSP, w, rho, 0, kActivationBlocks) / dense;
      const double dev = std::abs(ratio / std::sqrt(rho) - 1.0);
      if (dev > worst_sp) {
        worst_sp = dev;
        worst_cell = "width " + std::to_string(w) + " density " + fmt(rho) + " ratio " + fmt(ratio);
      }
    }
  }
  const double secs = clock.seconds();
  return {act < 1.1 && grad < 1.1 && worst_sp < 0.15 && secs < 600.0,
          "SUPAR activation max/min " + fmt(act) + ", input-gradient max/min " + fmt(grad) +
              " (bound 1.1); SP worst deviation from sqrt(rho) " + fmt(worst_sp) + " at " + worst_cell +
              " (bound 0.15); " + fmt(secs, 3) + " s (bound 600 s)"};
}

Outcome coord_check_criterion(const Options& opt) {
  Stopwatch clock;
  const auto corpus = load_corpus(opt.corpus);
  const auto plan = grid_plan();
  const auto report = coord_check(plan, corpus);
  const double flat = flatness_ratio(report.summary, ParamScheme::kSUPAR, plan.steps, kActivationBlocks);
  std::string broken;
  for (auto scheme : {ParamScheme::kSP, ParamScheme::kMUP}) {
    for (auto w : plan.widths) {
      double prev = std::numeric_limits<double>::infinity();
      for (double rho : plan.densities) {  // descending density
        const double v = cell_mean(report.summary, scheme, w, rho, plan.steps, kActivationBlocks);
        if (!(v < prev)) broken += std::string(" ") + scheme_name(scheme) + "@" + std::to_string(w);
        prev = v;
      }
    }
  }
  const double secs = clock.seconds();
  return {flat < 2.0 && broken.empty() && report.diverged.empty() && secs < 900.0,
          "SUPAR flatness " + fmt(flat) + " (bound 2), SP/MUP monotone in density: " +
              (broken.empty() ? std::string("yes") : "no," + broken) + ", diverged runs " +
              std::to_string(report.diverged.size()) + ", " + fmt(secs, 4) + " s (bound 900 s)"};
}

// 8-10 ------------------------------------------------------------------------

ExperimentConfig lr_sweep_config(const Options& opt, std::vector<ParamScheme> schemes) {
  ExperimentConfig c;
  c.kind = ExperimentKind::kLrSweep;
  c.corpus = opt.corpus;
  c.model.d_model = 128;
  c.model.d_head = 32;
  c.model.seq_len = opt.lr_seq_len;
  c.train.batch = 8;
  c.train.steps = opt.lr_steps;
  c.train.warmup = opt.lr_steps / 10;
  c.sweep.schemes = std::move(schemes);
  c.sweep.densities = {1.0, 0.25, 0.0625};
  c.seeds = opt.lr_seeds;
  return c;
}

std::vector<OptimumRow> sweep_optima(const ExperimentConfig& config) {
  const auto corpus = load_corpus(config.corpus);
  std::vector<RunRecord> records;
  for (const auto& cell : expand_sweep(config)) {
    for (std::size_t i = 0; i < config.seeds; ++i) {
      auto rec = train_run(cell.config, corpus, i);
      rec.axis_index = cell.axis_index;
      std::cerr << scheme_name(rec.scheme) << " width " << rec.width << " density " << rec.density << " lr "
                << rec.lr << " seed " << i << ": "
                << (rec.diverged ? std::string("diverged") : "val " + fmt(rec.val_loss, 6)) << '\n';
      records.push_back(std::move(rec));
    }
  }
  return select_optima(records, "lr", config.sweep.select);
}

struct Spread {
  std::size_t lo = 0, hi = 0;
  /// Optima on the first or last grid value: the true optimum may lie outside.
  std::size_t at_edge = 0;
  /// Cells where every value diverged for some seed.
  std::size_t undefined = 0;
  std::string listing;
  /// Grid steps between the extreme optima; no finite optimum counts as unbounded.
  std::size_t width() const { return undefined > 0 ? std::numeric_limits<std::size_t>::max() : hi - lo; }
  std::string text() const { return undefined > 0 ? "unbounded" : std::to_string(hi - lo); }
  /// Spread within `bound` with every optimum bracketed by the grid.
  bool stable_within(std::size_t bound) const { return undefined == 0 && at_edge == 0 && width() <= bound; }
};

Spread optimum_spread(const std::vector<OptimumRow>& rows, ParamScheme scheme, std::size_t grid_size) {
  Spread s{std::numeric_limits<std::size_t>::max(), 0, 0, 0, ""};
  for (const auto& r : rows) {
    if (r.scheme != scheme) continue;
    s.listing += " (" + std::to_string(r.width) + ", " + fmt(r.density) + "): ";
    if (!std::isfinite(r.mean_loss)) {
      ++s.undefined;
      s.listing += "none, every LR had a diverged seed";
      continue;
    }
    s.lo = std::min(s.lo, r.optimum_index);
    s.hi = std::max(s.hi, r.optimum_index);
    s.listing += "2^" + std::to_string(static_cast<int>(std::lround(std::log2(r.optimum))));
    if (r.optimum_index == 0 || r.optimum_index + 1 == grid_size) {
      ++s.at_edge;
      s.listing += " (grid edge)";
    }
  }
  return s;
}

std::optional<std::size_t> optimum_index(const std::vector<OptimumRow>& rows, ParamScheme scheme, double density) {
  for (const auto& r : rows)
    if (r.scheme == scheme && r.density == density && std::isfinite(r.mean_loss)) return r.optimum_index;
  return std::nullopt;
}

Outcome lr_transfer(const Options& opt) {
  Stopwatch clock;
  const auto config = lr_sweep_config(opt, {ParamScheme::kSP, ParamScheme::kSUPAR});
  const auto rows = sweep_optima(config);
  const auto grid = config.sweep.lr_exponents.size();
  const auto supar = optimum_spread(rows, ParamScheme::kSUPAR, grid);
  const auto sp = optimum_spread(rows, ParamScheme::kSP, grid);
  const auto sparse = optimum_index(rows, ParamScheme::kSP, 0.0625);
  const auto dense = optimum_index(rows, ParamScheme::kSP, 1.0);
  const long shift = sparse && dense ? static_cast<long>(*sparse) - static_cast<long>(*dense) : 0;
  const std::string shift_text = sparse && dense ? std::to_string(shift) : "undefined";
  return {supar.stable_within(1) && sparse && dense && shift >= 1,
          "SUPAR optima" + supar.listing + " spread " + supar.text() + " (bound 1); SP optima" + sp.listing +
              " shift 1 -> 1/16 " + shift_text + " (bound >= 1); " +
              fmt(clock.seconds() / 60.0, 3) + " min"};
}

Outcome ablations(const Options& opt) {
  Stopwatch clock;
  const auto config = lr_sweep_config(opt, {ParamScheme::kMupSuparInitOnly, ParamScheme::kMupSuparLrOnly});
  const auto rows = sweep_optima(config);
  const auto grid = config.sweep.lr_exponents.size();
  // An edge optimum only understates the spread, so it still counts here.
  const auto init_only = optimum_spread(rows, ParamScheme::kMupSuparInitOnly, grid);
  const auto lr_only = optimum_spread(rows, ParamScheme::kMupSuparLrOnly, grid);
  return {init_only.width() > 1 && lr_only.width() > 1,
          "init-only optima" + init_only.listing + " spread " + init_only.text() + "; lr-only optima" +
              lr_only.listing + " spread " + lr_only.text() +
              " (each must exceed 1); " + fmt(clock.seconds() / 60.0, 3) + " min"};
}

Outcome iso_wpn(const Options& opt) {
  Stopwatch clock;
  ExperimentConfig c;
  c.kind = ExperimentKind::kIsoScalingSweep;
  c.corpus = opt.corpus;
  c.model.d_model = 256;
  c.model.d_head = 64;
  c.model.seq_len = 64;
  c.train.batch = 8;
  c.train.steps = opt.iso_steps;
  c.train.warmup = opt.iso_steps / 10;
  c.sweep.schemes = {ParamScheme::kSP};
  c.sweep.lr_exponents.clear();
  for (int e = opt.iso_lr_min; e <= opt.iso_lr_max; ++e) c.sweep.lr_exponents.push_back(e);
  c.sweep.densities = {1.0, 0.5, 0.25};
  c.sweep.regime = ScalingRegime::kIsoWpn;
  c.sweep.base_width = 256;
  c.sweep.base_density = 1.0;
  c.seeds = opt.iso_seeds;

  // Scaling factors along the family, straight from the model builder.
  std::string factors;
  bool constant = true;
  for (auto scheme : {ParamScheme::kSUPAR, ParamScheme::kMUP}) {
    std::vector<std::pair<double, double>> hidden;
    for (double rho : c.sweep.densities) {
      ModelConfig mc = c.model;
      mc.scheme = scheme;
      mc.density = rho;
      mc.d_model = iso_wpn_width(256, 1.0, rho, mc.d_head);
      const auto model = build_model<double>(mc);
      const auto& p = model.params[model.layers[0].wq];
      hidden.emplace_back(p.init_std, p.lr);
    }
    const bool same = std::all_of(hidden.begin(), hidden.end(), [&](const auto& h) {
      return bit_equal(h.first, hidden[0].first) && bit_equal(h.second, hidden[0].second);
    });
    constant = constant && same;
    factors += std::string(" ") + scheme_name(scheme) + " hidden (init, lr):";
    for (const auto& [s, l] : hidden) factors += " (" + fmt(s) + ", " + fmt(l) + ")";
    factors += same ? " constant;" : " not constant;";
  }

  const auto rows = sweep_optima(c);
  const auto sp = optimum_spread(rows, ParamScheme::kSP, c.sweep.lr_exponents.size());
  return {sp.stable_within(1) && constant, "SP optima" + sp.listing + " spread " + sp.text() +
                                           " (bound 1);" + factors + " " + fmt(clock.seconds() / 60.0, 3) + " min"};
}

// 11 --------------------------------------------------------------------------

struct InvariantCheck {
  std::size_t weight_violations = 0;
  std::size_t moment_violations = 0;
};

void check_zeros(const TransformerModel<double>& model, const AdamState<double>& state, InvariantCheck& out) {
  for (std::size_t k = 0; k < model.params.size(); ++k) {
    const auto& p = model.params[k];
    if (!p.masked()) continue;
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      if (p.mask->bits[i]) continue;
      if (p.value.data()[i] != 0.0) ++out.weight_violations;
      if (state.m[k][i] != 0.0 || state.v[k][i] != 0.0) ++out.moment_violations;
    }
  }
}

struct LoopResult {
  InvariantCheck zeros;
  std::size_t density_violations = 0;
  std::size_t updates = 0;
  std::size_t steps = 0;
};

// Trains a width-64 model with dense-gradient mask updates every
// `interval` steps (none when dst is empty).
LoopResult invariant_loop(const Corpus& corpus, std::size_t steps, double density,
                          const std::optional<DstConfig>& dst) {
  ModelConfig mc;
  mc.d_model = 64;
  mc.d_head = 32;
  mc.seq_len = 32;
  mc.density = density;
  mc.seed = 21;
  auto model = build_model<double>(mc);
  const bool gmp = dst && dst->method == DstMethod::kGmp;
  if (gmp) densify_masks(model);
  std::vector<std::size_t> ones(model.params.size(), 0);
  for (std::size_t k = 0; k < model.params.size(); ++k)
    if (model.params[k].masked()) ones[k] = model.params[k].mask->ones();

  auto state = AdamState<double>::zeros_like(model);
  WindowSampler sampler(corpus.train(), 4, mc.seq_len, 5);
  const AdamConfig adam{0.9, 0.95, 1e-8, 0.0};
  LoopResult out;
  for (std::size_t step = 0; step < steps; ++step) {
    const auto b = sampler.next();
    for (auto& p : model.params) p.value.zero_grad();
    Tape<double> tape;
    const auto r = forward_loss(model, tape, b.tokens, b.targets, b.batch, b.len);
    tape.backward(r.loss);
    adamw_step(model, state, 1.0, adam);
    if (dst && is_update_step(*dst, step + 1)) {
      std::vector<std::vector<double>> dense(model.params.size());
      for (std::size_t i = 0; i < dense.size(); ++i)
        if (r.effective_weights[i].defined())
          dense[i].assign(r.effective_weights[i].grad().begin(), r.effective_weights[i].grad().end());
      dst_update(model, &state, *dst, step + 1, dense);
      ++out.updates;
      for (std::size_t k = 0; k < model.params.size(); ++k) {
        const auto& p = model.params[k];
        if (!p.masked()) continue;
        std::size_t expected = ones[k];
        if (gmp) {
          // Cubic schedule, evaluated here independently of the library.
          const double t = std::min<double>(static_cast<double>(step + 1), static_cast<double>(dst->end_step));
          const double s = dst->final_sparsity * (1.0 - std::pow(1.0 - t / static_cast<double>(dst->end_step), 3));
          expected = static_cast<std::size_t>(std::llround((1.0 - s) * static_cast<double>(p.value.numel())));
        }
        if (p.mask->ones() != expected) ++out.density_violations;
      }
    }
    check_zeros(model, state, out.zeros);
    ++out.steps;
  }
  return out;
}

Outcome mask_invariants(const Options& opt) {
  const auto corpus = load_corpus(opt.corpus);
  const auto fixed = invariant_loop(corpus, 500, 0.25, std::nullopt);

  DstConfig rigl;
  rigl.method = DstMethod::kRigl;
  rigl.update_interval = 25;
  rigl.drop_fraction = 0.3;
  const auto rl = invariant_loop(corpus, 500, 0.25, rigl);

  DstConfig gmp;
  gmp.method = DstMethod::kGmp;
  gmp.update_interval = 25;
  gmp.final_sparsity = 0.75;
  gmp.end_step = 375;
  const auto gm = invariant_loop(corpus, 500, 0.25, gmp);

  std::size_t bad = 0;
  for (const auto* r : {&fixed, &rl, &gm}) bad += r->zeros.weight_violations + r->zeros.moment_violations;
  const bool pass = bad == 0 && rl.density_violations == 0 && gm.density_violations == 0 && rl.updates == 20 &&
                    gm.updates == 15;
  return {pass, "500-step runs (static, RigL, GMP): " + std::to_string(bad) +
                    " nonzero pruned weights or moments; RigL density mismatches " +
                    std::to_string(rl.density_violations) + " over " + std::to_string(rl.updates) +
                    " updates; GMP schedule mismatches " + std::to_string(gm.density_violations) + " over " +
                    std::to_string(gm.updates) + " updates"};
}

// 12 --------------------------------------------------------------------------

Outcome reproducibility(const Options& opt) {
  const auto corpus = load_corpus(opt.corpus);
  std::vector<ExperimentConfig> originals{small_train(opt.corpus, ParamScheme::kSUPAR, 0.25, 40),
                                          small_train(opt.corpus, ParamScheme::kSP, 1.0, 40)};
  auto rigl = small_train(opt.corpus, ParamScheme::kSUPAR, 0.25, 40);
  rigl.dst = DstConfig{};
  rigl.dst->update_interval = 10;
  originals.push_back(rigl);

  std::size_t identical = 0;
  for (std::size_t k = 0; k < originals.size(); ++k) {
    const auto first = train_run(originals[k], corpus, k + 1);
    // Round-trip through the textual config, as a user would.
    const auto parsed = experiment_from_config(ConfigText::parse(first.config.format()));
    const auto again = train_run(parsed, corpus, parsed.train.seed_index);
    if (bit_equal(first.train_loss, again.train_loss) && bit_equal(first.val_loss, again.val_loss)) ++identical;
  }
  return {identical == originals.size(), std::to_string(identical) + "/" + std::to_string(originals.size()) +
                                             " reruns from recorded configs bit-identical (SUPAR sparse, SP "
                                             "dense, SUPAR with RigL)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Options opt;
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 12));
  app.add_option("--corpus", opt.corpus, "Corpus file");
  app.add_option("--lr-seeds", opt.lr_seeds, "Seeds per LR-sweep cell");
  app.add_option("--lr-steps", opt.lr_steps, "Training steps per LR-sweep run");
  app.add_option("--lr-seq-len", opt.lr_seq_len, "Sequence length of LR-sweep runs");
  app.add_option("--iso-seeds", opt.iso_seeds, "Seeds per iso-WPN cell");
  app.add_option("--iso-steps", opt.iso_steps, "Training steps per iso-WPN run");
  app.add_option("--iso-lr-min", opt.iso_lr_min, "Lowest LR exponent of the iso-WPN sweep");
  app.add_option("--iso-lr-max", opt.iso_lr_max, "Highest LR exponent of the iso-WPN sweep");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty())
    for (int i = 1; i <= 12; ++i) selected.push_back(i);

  const std::map<int, std::function<Outcome()>> criteria{
      {1, gradient_correctness},
      {2, forward_oracle},
      {3, backward_oracle},
      {4, update_oracle},
      {5, [&] { return scheme_collapse(opt); }},
      {6, [&] { return init_table(opt); }},
      {7, [&] { return coord_check_criterion(opt); }},
      {8, [&] { return lr_transfer(opt); }},
      {9, [&] { return ablations(opt); }},
      {10, [&] { return iso_wpn(opt); }},
      {11, [&] { return mask_invariants(opt); }},
      {12, [&] { return reproducibility(opt); }},
  };

  int failures = 0;
  for (int n : selected) {
    Outcome o;
    try {
      o = criteria.at(n)();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << n << (o.pass ? " PASS: " : " FAIL: ") << o.detail << std::endl;
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
