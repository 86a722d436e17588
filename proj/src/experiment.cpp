// SPDX-License-Identifier: Apache-2.0
#include "supar/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "supar/diagnostics.hpp"
#include "supar/errors.hpp"
#include "supar/variance_oracle.hpp"

namespace supar {

namespace {

constexpr std::uint64_t kModelTag = 0x7a11;
constexpr std::uint64_t kDataTag = 0xda7a;

struct KindName {
  ExperimentKind kind;
  const char* name;
};

constexpr KindName kKinds[] = {
    {ExperimentKind::kTrain, "train"},
    {ExperimentKind::kLrSweep, "lr-sweep"},
    {ExperimentKind::kInitSweep, "init-sweep"},
    {ExperimentKind::kCoordCheck, "coord-check"},
    {ExperimentKind::kInitScaling, "init-scaling"},
    {ExperimentKind::kDeltaYProbe, "delta-y-probe"},
    {ExperimentKind::kOracleSuite, "oracle-suite"},
    {ExperimentKind::kDstLrSweep, "dst-lr-sweep"},
    {ExperimentKind::kIsoScalingSweep, "iso-scaling-sweep"},
};

}  // namespace

const char* kind_name(ExperimentKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k.name;
  return "?";
}

ExperimentKind kind_from_name(const std::string& name) {
  for (const auto& k : kKinds)
    if (name == k.name) return k.kind;
  throw ConfigError("unknown experiment kind '" + name + "'");
}

bool is_sweep(ExperimentKind kind) {
  return kind == ExperimentKind::kLrSweep || kind == ExperimentKind::kInitSweep ||
         kind == ExperimentKind::kDstLrSweep || kind == ExperimentKind::kIsoScalingSweep;
}

namespace {

const char* selection_name(Selection s) { return s == Selection::kValidation ? "validation" : "train"; }

Selection selection_from_name(const std::string& name) {
  if (name == "validation") return Selection::kValidation;
  if (name == "train") return Selection::kTrain;
  throw ConfigError("unknown selection '" + name + "' (validation or train)");
}

// Typed accessors. Integers are accepted where floats are expected.

std::string type_error(const std::string& key, const char* want) {
  return "config key '" + key + "' must be " + want;
}

double as_double(const std::string& key, const ConfigScalar& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw ConfigError(type_error(key, "a number"));
}

std::int64_t as_int(const std::string& key, const ConfigScalar& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw ConfigError(type_error(key, "an integer"));
}

std::string as_string(const std::string& key, const ConfigScalar& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw ConfigError(type_error(key, "a quoted string"));
}

ConfigScalar scalar(const std::string& key, const ConfigValue& v) {
  return std::visit(
      [&](const auto& x) -> ConfigScalar {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, ConfigList>) {
          throw ConfigError(type_error(key, "a scalar, not a list"));
        } else {
          return x;
        }
      },
      v);
}

const ConfigList& list(const std::string& key, const ConfigValue& v) {
  if (const auto* l = std::get_if<ConfigList>(&v)) return *l;
  throw ConfigError(type_error(key, "a list"));
}

std::size_t as_size(const std::string& key, const ConfigScalar& v) {
  const auto i = as_int(key, v);
  if (i < 0) throw ConfigError(type_error(key, "non-negative"));
  return static_cast<std::size_t>(i);
}

ConfigList to_list(const auto& values) {
  ConfigList out;
  for (const auto& v : values) {
    if constexpr (std::is_same_v<std::decay_t<decltype(v)>, double>)
      out.emplace_back(v);
    else if constexpr (std::is_same_v<std::decay_t<decltype(v)>, ParamScheme>)
      out.emplace_back(std::string(scheme_name(v)));
    else
      out.emplace_back(static_cast<std::int64_t>(v));
  }
  return out;
}

}  // namespace

ConfigText to_config(const ExperimentConfig& c) {
  ConfigText t;
  auto i64 = [](auto v) { return ConfigValue(static_cast<std::int64_t>(v)); };
  auto str = [](const std::string& s) { return ConfigValue(s); };
  t.set("kind", str(kind_name(c.kind)));
  t.set("seed", i64(c.seed));
  t.set("seeds", i64(c.seeds));
  t.set("corpus", str(c.corpus));
  t.set("out_dir", str(c.out_dir));
  t.set("probe_steps", i64(c.probe_steps));
  t.set("oracle_samples", i64(c.oracle_samples));

  const auto& m = c.model;
  t.set("model.d_model", i64(m.d_model));
  t.set("model.n_layers", i64(m.n_layers));
  t.set("model.d_head", i64(m.d_head));
  t.set("model.vocab_size", i64(m.vocab_size));
  t.set("model.seq_len", i64(m.seq_len));
  t.set("model.density", m.density);
  t.set("model.scheme", str(scheme_name(m.scheme)));
  t.set("model.optimizer", str(optimizer_name(m.optimizer)));
  t.set("model.ln_eps", m.ln_eps);
  t.set("model.base.sigma", m.base.sigma_base);
  t.set("model.base.eta", m.base.eta_base);
  t.set("model.base.alpha_input", m.base.alpha_input);
  t.set("model.base.alpha_output", m.base.alpha_output);
  t.set("model.base.d_base", i64(m.base.d_base));
  t.set("model.base.rho_base", m.base.rho_base);

  const auto& tr = c.train;
  t.set("train.batch", i64(tr.batch));
  t.set("train.steps", i64(tr.steps));
  t.set("train.warmup", i64(tr.warmup));
  t.set("train.schedule", str(schedule_name(tr.schedule)));
  t.set("train.beta1", tr.adam.beta1);
  t.set("train.beta2", tr.adam.beta2);
  t.set("train.eps", tr.adam.eps);
  t.set("train.weight_decay", tr.adam.weight_decay);
  t.set("train.momentum", tr.momentum);
  t.set("train.eval_batches", i64(tr.eval_batches));
  t.set("train.divergence_loss", tr.divergence_loss);
  t.set("train.seed_index", i64(tr.seed_index));

  const auto& s = c.sweep;
  t.set("sweep.lr_exponents", to_list(s.lr_exponents));
  t.set("sweep.init_stds", to_list(s.init_stds));
  t.set("sweep.densities", to_list(s.densities));
  t.set("sweep.widths", to_list(s.widths));
  t.set("sweep.schemes", to_list(s.schemes));
  t.set("sweep.regime", str(regime_name(s.regime)));
  t.set("sweep.base_width", i64(s.base_width));
  t.set("sweep.base_density", s.base_density);
  t.set("sweep.select", str(selection_name(s.select)));

  const DstConfig d = c.dst.value_or(DstConfig{});
  t.set("dst.method", str(c.dst ? dst_method_name(d.method) : "none"));
  t.set("dst.update_interval", i64(d.update_interval));
  t.set("dst.drop_fraction", d.drop_fraction);
  t.set("dst.final_sparsity", d.final_sparsity);
  t.set("dst.end_step", i64(d.end_step));
  t.set("dst.reset_moments", d.reset_moments);
  return t;
}

ExperimentConfig experiment_from_config(const ConfigText& text) {
  ExperimentConfig c;
  DstConfig d;
  bool dst_on = false;
  for (const auto& [key, value] : text.values()) {
    auto sc = [&] { return scalar(key, value); };
    auto num = [&] { return as_double(key, sc()); };
    auto size = [&] { return as_size(key, sc()); };
    auto name = [&] { return as_string(key, sc()); };
    if (key == "kind") c.kind = kind_from_name(name());
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_int(key, sc()));
    else if (key == "seeds") c.seeds = size();
    else if (key == "corpus") c.corpus = name();
    else if (key == "out_dir") c.out_dir = name();
    else if (key == "probe_steps") c.probe_steps = size();
    else if (key == "oracle_samples") c.oracle_samples = size();
    else if (key == "model.d_model") c.model.d_model = size();
    else if (key == "model.n_layers") c.model.n_layers = size();
    else if (key == "model.d_head") c.model.d_head = size();
    else if (key == "model.vocab_size") c.model.vocab_size = size();
    else if (key == "model.seq_len") c.model.seq_len = size();
    else if (key == "model.density") c.model.density = num();
    else if (key == "model.scheme") c.model.scheme = scheme_from_name(name());
    else if (key == "model.optimizer") c.model.optimizer = optimizer_from_name(name());
    else if (key == "model.ln_eps") c.model.ln_eps = num();
    else if (key == "model.base.sigma") c.model.base.sigma_base = num();
    else if (key == "model.base.eta") c.model.base.eta_base = num();
    else if (key == "model.base.alpha_input") c.model.base.alpha_input = num();
    else if (key == "model.base.alpha_output") c.model.base.alpha_output = num();
    else if (key == "model.base.d_base") c.model.base.d_base = size();
    else if (key == "model.base.rho_base") c.model.base.rho_base = num();
    else if (key == "train.batch") c.train.batch = size();
    else if (key == "train.steps") c.train.steps = size();
    else if (key == "train.warmup") c.train.warmup = size();
    else if (key == "train.schedule") c.train.schedule = schedule_from_name(name());
    else if (key == "train.beta1") c.train.adam.beta1 = num();
    else if (key == "train.beta2") c.train.adam.beta2 = num();
    else if (key == "train.eps") c.train.adam.eps = num();
    else if (key == "train.weight_decay") c.train.adam.weight_decay = num();
    else if (key == "train.momentum") c.train.momentum = num();
    else if (key == "train.eval_batches") c.train.eval_batches = size();
    else if (key == "train.divergence_loss") c.train.divergence_loss = num();
    else if (key == "train.seed_index") c.train.seed_index = size();
    else if (key == "sweep.lr_exponents") {
      c.sweep.lr_exponents.clear();
      for (const auto& v : list(key, value)) c.sweep.lr_exponents.push_back(static_cast<int>(as_int(key, v)));
    } else if (key == "sweep.init_stds") {
      c.sweep.init_stds.clear();
      for (const auto& v : list(key, value)) c.sweep.init_stds.push_back(as_double(key, v));
    } else if (key == "sweep.densities") {
      c.sweep.densities.clear();
      for (const auto& v : list(key, value)) c.sweep.densities.push_back(as_double(key, v));
    } else if (key == "sweep.widths") {
      c.sweep.widths.clear();
      for (const auto& v : list(key, value)) c.sweep.widths.push_back(as_size(key, v));
    } else if (key == "sweep.schemes") {
      c.sweep.schemes.clear();
      for (const auto& v : list(key, value)) c.sweep.schemes.push_back(scheme_from_name(as_string(key, v)));
    } else if (key == "sweep.regime") c.sweep.regime = regime_from_name(name());
    else if (key == "sweep.base_width") c.sweep.base_width = size();
    else if (key == "sweep.base_density") c.sweep.base_density = num();
    else if (key == "sweep.select") c.sweep.select = selection_from_name(name());
    else if (key == "dst.method") {
      const auto m = name();
      dst_on = m != "none";
      if (dst_on) d.method = dst_method_from_name(m);
    } else if (key == "dst.update_interval") d.update_interval = size();
    else if (key == "dst.drop_fraction") d.drop_fraction = num();
    else if (key == "dst.final_sparsity") d.final_sparsity = num();
    else if (key == "dst.end_step") d.end_step = size();
    else if (key == "dst.reset_moments") {
      const auto v = sc();
      if (!std::holds_alternative<bool>(v)) throw ConfigError(type_error(key, "true or false"));
      d.reset_moments = std::get<bool>(v);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  if (dst_on) c.dst = d;
  return c;
}

namespace {

std::size_t family_width(const SweepAxes& s, double density, std::size_t head) {
  switch (s.regime) {
    case ScalingRegime::kFixedWidth:
      return s.base_width;
    case ScalingRegime::kIsoParameter:
      return iso_parameter_width(s.base_width, s.base_density, density, head);
    case ScalingRegime::kIsoWpn:
      return iso_wpn_width(s.base_width, s.base_density, density, head);
  }
  return s.base_width;
}

}  // namespace

void validate(const ExperimentConfig& c) {
  if (c.seeds == 0) throw ConfigError("seeds must be at least 1");
  if (c.train.batch == 0) throw ConfigError("train.batch must be at least 1");
  if (c.train.steps == 0 && c.kind != ExperimentKind::kDeltaYProbe) throw ConfigError("train.steps must be at least 1");
  if (c.train.eval_batches == 0) throw ConfigError("train.eval_batches must be at least 1");
  if (c.model.vocab_size != 256) throw ConfigError("model.vocab_size must be 256 for byte-level corpora");
  if (!(c.train.divergence_loss > 0.0)) throw DomainError("train.divergence_loss must be positive");
  ModelConfig m = c.model;
  validate(m);
  validate(m.base, m.d_head);
  schedule_multiplier(ScheduleSpec{c.train.warmup, std::max<std::size_t>(c.train.steps, 1), c.train.schedule}, 0);
  if (c.dst) validate(*c.dst);

  const auto& s = c.sweep;
  auto need = [&](bool ok, const char* axis) {
    if (!ok) throw ConfigError(std::string(kind_name(c.kind)) + " needs a nonempty " + axis + " axis");
  };
  switch (c.kind) {
    case ExperimentKind::kLrSweep:
    case ExperimentKind::kDstLrSweep:
    case ExperimentKind::kIsoScalingSweep:
      need(!s.lr_exponents.empty(), "sweep.lr_exponents");
      need(!s.densities.empty(), "sweep.densities");
      need(!s.schemes.empty(), "sweep.schemes");
      break;
    case ExperimentKind::kInitSweep:
      need(!s.init_stds.empty(), "sweep.init_stds");
      need(!s.densities.empty(), "sweep.densities");
      need(!s.schemes.empty(), "sweep.schemes");
      break;
    case ExperimentKind::kCoordCheck:
    case ExperimentKind::kInitScaling:
    case ExperimentKind::kDeltaYProbe:
      need(!s.densities.empty(), "sweep.densities");
      need(!s.schemes.empty(), "sweep.schemes");
      break;
    default:
      break;
  }
  if (c.kind == ExperimentKind::kDstLrSweep && !c.dst) throw ConfigError("dst-lr-sweep needs dst.method rigl or gmp");
  for (double r : s.densities)
    if (!(r > 0.0 && r <= 1.0)) throw DomainError("sweep.densities entries must lie in (0,1]");
  for (double v : s.init_stds)
    if (!(v > 0.0)) throw DomainError("sweep.init_stds entries must be positive");
  if (is_sweep(c.kind) || c.kind == ExperimentKind::kCoordCheck || c.kind == ExperimentKind::kInitScaling ||
      c.kind == ExperimentKind::kDeltaYProbe) {
    for (const auto& cell : expand_sweep(c)) validate(cell.config.model);
  }
  if (c.kind == ExperimentKind::kOracleSuite && c.oracle_samples < kMinOracleSamples)
    throw ConfigError("oracle_samples must be at least 10000");
}

std::filesystem::path resolve_out_dir(const ExperimentConfig& config) {
  if (!config.out_dir.empty()) return config.out_dir;
  if (const char* env = std::getenv("SUPAR_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "results";
}

namespace {

double evaluate(const TransformerModel<double>& model, const std::vector<Batch>& batches) {
  double total = 0.0;
  for (const auto& b : batches) {
    Tape<double> tape;
    total += forward_loss(model, tape, b.tokens, b.targets, b.batch, b.len).loss.item();
  }
  return total / static_cast<double>(batches.size());
}

}  // namespace

bool loss_diverged(double loss, double initial_loss, double limit) {
  if (!std::isfinite(loss)) return true;
  return loss > limit && loss > 2.0 * initial_loss;
}

RunRecord train_run(const ExperimentConfig& config, const Corpus& corpus, std::size_t seed_index) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig resolved = config;
  resolved.kind = ExperimentKind::kTrain;
  resolved.seeds = 1;
  resolved.train.seed_index = seed_index;

  RunRecord rec;
  rec.config = to_config(resolved);
  rec.scheme = config.model.scheme;
  rec.width = config.model.d_model;
  rec.density = config.model.density;
  rec.lr = config.model.base.eta_base;
  rec.init_std = config.model.base.sigma_base;
  rec.seed_index = seed_index;

  ModelConfig mc = config.model;
  mc.seed = sub_seed(config.seed, seed_index, kModelTag);
  auto model = build_model<double>(mc);
  if (config.dst && config.dst->method == DstMethod::kGmp) densify_masks(model);

  const auto& tr = config.train;
  WindowSampler sampler(corpus.train(), tr.batch, mc.seq_len, sub_seed(config.seed, seed_index, kDataTag));
  const ScheduleSpec schedule{tr.warmup, tr.steps, tr.schedule};
  auto adam = AdamState<double>::zeros_like(model);
  auto sgd = SgdState<double>::zeros_like(model);
  const bool use_adam = mc.optimizer == OptimizerKind::kAdamW;

  for (std::size_t step = 0; step < tr.steps; ++step) {
    const Batch b = sampler.next();
    for (auto& p : model.params) p.value.zero_grad();
    Tape<double> tape;
    const auto r = forward_loss(model, tape, b.tokens, b.targets, b.batch, b.len);
    const double loss = r.loss.item();
    rec.train_loss.push_back(loss);
    if (loss_diverged(loss, rec.train_loss.front(), tr.divergence_loss)) {
      rec.diverged = true;
      break;
    }
    tape.backward(r.loss);
    const double mult = schedule_multiplier(schedule, step);
    if (use_adam)
      adamw_step(model, adam, mult, tr.adam);
    else
      sgd_step(model, sgd, mult, tr.momentum);
    if (config.dst && is_update_step(*config.dst, step + 1)) {
      std::vector<std::vector<double>> dense(model.params.size());
      for (std::size_t i = 0; i < dense.size(); ++i)
        if (r.effective_weights[i].defined())
          dense[i].assign(r.effective_weights[i].grad().begin(), r.effective_weights[i].grad().end());
      rec.dst_events.push_back(dst_update(model, use_adam ? &adam : nullptr, *config.dst, step + 1, dense));
    }
  }

  const double inf = std::numeric_limits<double>::infinity();
  if (rec.diverged) {
    rec.final_train_loss = rec.val_loss = rec.best_train_loss = inf;
  } else {
    const std::size_t tail = std::max<std::size_t>(1, rec.train_loss.size() / 10);
    double sum = 0.0;
    for (std::size_t i = rec.train_loss.size() - tail; i < rec.train_loss.size(); ++i) sum += rec.train_loss[i];
    rec.final_train_loss = sum / static_cast<double>(tail);
    rec.best_train_loss = *std::min_element(rec.train_loss.begin(), rec.train_loss.end());
    rec.val_loss = evaluate(model, evaluation_batches(corpus.validation(), tr.batch, mc.seq_len, tr.eval_batches));
    if (!std::isfinite(rec.val_loss)) {
      rec.diverged = true;
      rec.val_loss = inf;
    }
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<SweepCell> expand_sweep(const ExperimentConfig& config) {
  const auto& s = config.sweep;
  std::vector<SweepCell> cells;
  if (config.kind == ExperimentKind::kTrain) {
    cells.push_back({config, config.model.base.eta_base, 0});
    return cells;
  }
  const std::vector<std::size_t> widths = s.widths.empty() ? std::vector<std::size_t>{config.model.d_model} : s.widths;
  const bool init_axis = config.kind == ExperimentKind::kInitSweep;
  std::vector<double> values;
  if (init_axis) {
    values = s.init_stds;
  } else if (is_sweep(config.kind)) {
    for (int e : s.lr_exponents) values.push_back(std::ldexp(1.0, e));
  } else {
    values = {config.model.base.eta_base};
  }

  for (auto scheme : s.schemes) {
    for (double density : s.densities) {
      std::vector<std::size_t> cell_widths = widths;
      if (config.kind == ExperimentKind::kIsoScalingSweep)
        cell_widths = {family_width(s, density, config.model.d_head)};
      for (auto width : cell_widths) {
        for (std::size_t i = 0; i < values.size(); ++i) {
          SweepCell cell{config, values[i], i};
          auto& m = cell.config.model;
          m.scheme = scheme;
          m.d_model = width;
          m.density = density;
          if (init_axis)
            m.base.sigma_base = values[i];
          else
            m.base.eta_base = values[i];
          if (cell.config.dst && cell.config.dst->method == DstMethod::kGmp) {
            cell.config.dst->final_sparsity = 1.0 - density;
            if (cell.config.dst->end_step == 0) cell.config.dst->end_step = config.train.steps * 3 / 4;
          }
          cells.push_back(std::move(cell));
        }
      }
    }
  }
  return cells;
}

std::vector<OptimumRow> select_optima(const std::vector<RunRecord>& records, const std::string& axis,
                                      Selection selection) {
  using Key = std::tuple<int, std::size_t, double>;
  // key -> axis index -> (value, losses)
  std::map<Key, std::map<std::size_t, std::pair<double, std::vector<double>>>> groups;
  for (const auto& r : records) {
    const double value = axis == "init_std" ? r.init_std : r.lr;
    const double loss = r.diverged ? std::numeric_limits<double>::infinity()
                                   : (selection == Selection::kValidation ? r.val_loss : r.final_train_loss);
    auto& slot = groups[{static_cast<int>(r.scheme), r.width, r.density}][r.axis_index];
    slot.first = value;
    slot.second.push_back(loss);
  }
  std::vector<OptimumRow> out;
  for (const auto& [key, by_index] : groups) {
    OptimumRow row;
    row.scheme = static_cast<ParamScheme>(std::get<0>(key));
    row.width = std::get<1>(key);
    row.density = std::get<2>(key);
    row.axis = axis;
    row.selection = selection;
    row.mean_loss = std::numeric_limits<double>::infinity();
    row.optimum = std::numeric_limits<double>::quiet_NaN();
    bool found = false;
    for (const auto& [index, entry] : by_index) {
      double mean = 0.0;
      for (double l : entry.second) mean += l;
      mean /= static_cast<double>(entry.second.size());
      if (!std::isfinite(mean)) continue;
      const bool better = !found || mean < row.mean_loss || (mean == row.mean_loss && entry.first < row.optimum);
      if (better) {
        row.mean_loss = mean;
        row.optimum = entry.first;
        row.optimum_index = index;
        found = true;
      }
    }
    out.push_back(row);
  }
  return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  const auto precision = out.precision(17);
  out << kSweepSchema << '\n' << "kind,scheme,width,density,lr,init_std,seed,step,metric,loss,diverged\n";
  for (const auto& r : records) {
    const std::string prefix = [&] {
      std::ostringstream p;
      p.precision(17);
      p << kind_name(r.kind) << ',' << scheme_name(r.scheme) << ',' << r.width << ',' << r.density << ',' << r.lr
        << ',' << r.init_std << ',' << r.seed_index << ',';
      return p.str();
    }();
    for (std::size_t t = 0; t < r.train_loss.size(); ++t)
      out << prefix << t << ",train_loss," << r.train_loss[t] << ',' << (r.diverged ? 1 : 0) << '\n';
    out << prefix << r.train_loss.size() << ",val_loss," << r.val_loss << ',' << (r.diverged ? 1 : 0) << '\n';
  }
  out.precision(precision);
}

void write_optima_csv(std::ostream& out, const std::vector<OptimumRow>& rows) {
  const auto precision = out.precision(17);
  out << kOptimaSchema << '\n' << "scheme,width,density,axis,optimum,optimum_index,mean_loss,selection\n";
  for (const auto& r : rows)
    out << scheme_name(r.scheme) << ',' << r.width << ',' << r.density << ',' << r.axis << ',' << r.optimum << ','
        << r.optimum_index << ',' << r.mean_loss << ',' << selection_name(r.selection) << '\n';
  out.precision(precision);
}

void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    body(out);
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw IoError("write failed for '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

namespace {

CoordCheckPlan plan_from(const ExperimentConfig& c) {
  CoordCheckPlan plan;
  plan.schemes = c.sweep.schemes;
  plan.widths = c.sweep.widths.empty() ? std::vector<std::size_t>{c.model.d_model} : c.sweep.widths;
  plan.densities = c.sweep.densities;
  plan.seeds = c.seeds;
  plan.steps = c.kind == ExperimentKind::kDeltaYProbe ? c.train.steps : c.probe_steps;
  plan.batch = c.train.batch;
  plan.seq_len = c.model.seq_len;
  plan.n_layers = c.model.n_layers;
  plan.d_head = c.model.d_head;
  plan.base = c.model.base;
  plan.adam = c.train.adam;
  plan.seed = c.seed;
  return plan;
}

std::string records_text(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out << "# run " << i << " wall_seconds " << r.wall_seconds << " diverged " << (r.diverged ? 1 : 0)
        << " final_train_loss " << r.final_train_loss << " val_loss " << r.val_loss << '\n'
        << r.config.format() << '\n';
  }
  return out.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const RecordCallback& on_record) {
  validate(config);
  ExperimentResult result;
  const auto dir = resolve_out_dir(config);
  const std::string stem = kind_name(config.kind);

  switch (config.kind) {
    case ExperimentKind::kOracleSuite: {
      auto grid = default_oracle_grid();
      grid.samples = config.oracle_samples;
      grid.d_base = config.model.base.d_base;
      const auto rows = run_oracle_suite(grid, config.seed);
      const auto path = dir / "oracle.csv";
      write_file_atomic(path, [&](std::ostream& out) { write_oracle_csv(out, rows); });
      result.files.push_back(path);
      for (const auto& r : rows) result.failed_checks += r.pass ? 0 : 1;
      return result;
    }
    case ExperimentKind::kCoordCheck:
    case ExperimentKind::kInitScaling:
    case ExperimentKind::kDeltaYProbe: {
      const auto corpus = load_corpus(config.corpus);
      const auto plan = plan_from(config);
      const auto probe = evaluation_batches(corpus.validation(), plan.batch, plan.seq_len, 1).front();
      DiagnosticReport report;
      if (config.kind == ExperimentKind::kCoordCheck)
        report = coord_check(plan, corpus);
      else if (config.kind == ExperimentKind::kInitScaling)
        report = init_scaling_table(plan, probe);
      else
        report = delta_y_probe(plan, probe);
      const auto path = dir / (stem + ".csv");
      write_file_atomic(path, [&](std::ostream& out) { write_stat_csv(out, report.rows); });
      const auto flat = dir / (stem + "_flatness.csv");
      write_file_atomic(flat, [&](std::ostream& out) {
        out << "scheme,flatness,threshold,diverged_runs\n";
        for (const auto& [scheme, ratio] : report.flatness)
          out << scheme_name(scheme) << ',' << ratio << ',' << plan.flatness_threshold << ','
              << report.diverged.size() << '\n';
      });
      result.files = {path, flat};
      return result;
    }
    default:
      break;
  }

  const auto corpus = load_corpus(config.corpus);
  for (const auto& cell : expand_sweep(config)) {
    for (std::size_t i = 0; i < config.seeds; ++i) {
      auto rec = train_run(cell.config, corpus, config.train.seed_index + i);
      rec.kind = config.kind;
      rec.axis_index = cell.axis_index;
      if (on_record) on_record(rec);
      result.records.push_back(std::move(rec));
    }
  }
  const auto path = dir / (stem + ".csv");
  write_file_atomic(path, [&](std::ostream& out) { write_sweep_csv(out, result.records); });
  result.files.push_back(path);
  const auto runs = dir / (stem + "_records.txt");
  write_file_atomic(runs, [&](std::ostream& out) { out << records_text(result.records); });
  result.files.push_back(runs);
  if (is_sweep(config.kind)) {
    const std::string axis = config.kind == ExperimentKind::kInitSweep ? "init_std" : "lr";
    result.optima = select_optima(result.records, axis, config.sweep.select);
    const auto opt = dir / (stem + "_optima.csv");
    write_file_atomic(opt, [&](std::ostream& out) { write_optima_csv(out, result.optima); });
    result.files.push_back(opt);
  }
  return result;
}

}  // namespace supar
