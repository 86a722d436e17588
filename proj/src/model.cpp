// SPDX-License-Identifier: Apache-2.0
#include "supar/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "supar/errors.hpp"
#include "supar/ops.hpp"

namespace supar {

namespace {

enum Tag : std::uint64_t { kTagQ = 1, kTagK, kTagV, kTagO, kTagW1, kTagW3, kTagW2, kTagEmbedding };

// Weight draws and mask draws use disjoint seed domains.
constexpr std::uint64_t kWeightDomain = 0x5eed0000;

template <typename T>
Tensor<T> gaussian(const Shape& shape, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(normal(rng));
  return Tensor<T>(shape, std::move(data), true);
}

template <typename T>
double mean_abs_tensor(const Tensor<T>& t) {
  return mean_abs<T>(t.data());
}

template <typename T>
double mean_abs_many(std::initializer_list<Tensor<T>> tensors) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& t : tensors) {
    for (const T v : t.data()) total += std::abs(static_cast<double>(v));
    n += t.numel();
  }
  return total / static_cast<double>(n);
}

}  // namespace

std::size_t ModelConfig::ffn_hidden() const {
  const auto raw = static_cast<std::size_t>(std::llround(8.0 * static_cast<double>(d_model) / 3.0));
  return (raw + 31) / 32 * 32;
}

void validate(const ModelConfig& c) {
  if (c.d_model == 0 || c.n_layers == 0 || c.d_head == 0 || c.vocab_size == 0 || c.seq_len == 0) {
    throw DomainError("model config: extents must be positive");
  }
  if (c.d_model % c.d_head != 0) {
    std::ostringstream msg;
    msg << "model config: d_model " << c.d_model << " is not divisible by d_head " << c.d_head;
    throw DomainError(msg.str());
  }
  if (!(c.density > 0.0 && c.density <= 1.0)) throw DomainError("model config: density outside (0, 1]");
  if (!(c.ln_eps >= 0.0)) throw DomainError("model config: layer-norm eps must be non-negative");
  validate(c.base, c.d_head);
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t sub_seed(std::uint64_t seed, std::size_t layer, std::uint64_t tag) {
  return seed ^ mix_seed((static_cast<std::uint64_t>(layer) << 16) ^ tag);
}

template <std::floating_point T>
std::vector<Tensor<T>> TransformerModel<T>::values() const {
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

template <std::floating_point T>
TransformerModel<T> TransformerModel<T>::with_values(std::span<const Tensor<T>> values) const {
  if (values.size() != params.size()) throw ContractViolation("with_values: wrong number of tensors");
  TransformerModel copy = *this;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].shape() != params[i].value.shape()) {
      throw ContractViolation("with_values: shape mismatch for " + params[i].name);
    }
    copy.params[i].value = values[i];
  }
  return copy;
}

template <std::floating_point T>
TransformerModel<T> build_model(const ModelConfig& config) {
  validate(config);
  TransformerModel<T> model;
  model.config = config;
  const double m_d = config.m_d(), m_rho = config.m_rho();
  const std::size_t d = config.d_model, ffn = config.ffn_hidden();

  auto add_param = [&](std::string name, LayerRole role, Shape shape, std::size_t layer, std::uint64_t tag) {
    Param<T> p;
    p.name = std::move(name);
    p.role = role;
    p.lr = layer_lr(role, config.scheme, config.optimizer, config.base, m_d, m_rho);
    p.init_std = init_std(role, config.scheme, config.base, m_d, m_rho);
    if (role == LayerRole::kVector) {
      // Norm gains start at one.
      p.value = Tensor<T>::full(std::move(shape), T(1), true);
    } else {
      p.value = gaussian<T>(shape, p.init_std, sub_seed(config.seed, layer, kWeightDomain | tag));
    }
    if (role == LayerRole::kHidden) {
      p.mask = sample_random_mask(shape[0], shape[1], config.density, sub_seed(config.seed, layer, tag));
      std::vector<T> m(p.mask->bits.begin(), p.mask->bits.end());
      p.mask_values = Tensor<T>(shape, std::move(m));
      auto w = p.value.mutable_data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!p.mask->bits[i]) w[i] = T(0);
      }
    }
    model.params.push_back(std::move(p));
    return model.params.size() - 1;
  };

  model.embedding = add_param("embedding", LayerRole::kEmbedding, {config.vocab_size, d}, 0, kTagEmbedding);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    LayerSlots s{};
    s.ln1 = add_param(prefix + "ln1", LayerRole::kVector, {d}, l, 0);
    s.wq = add_param(prefix + "wq", LayerRole::kHidden, {d, d}, l, kTagQ);
    s.wk = add_param(prefix + "wk", LayerRole::kHidden, {d, d}, l, kTagK);
    s.wv = add_param(prefix + "wv", LayerRole::kHidden, {d, d}, l, kTagV);
    s.wo = add_param(prefix + "wo", LayerRole::kHidden, {d, d}, l, kTagO);
    s.ln2 = add_param(prefix + "ln2", LayerRole::kVector, {d}, l, 0);
    s.w1 = add_param(prefix + "w1", LayerRole::kHidden, {d, ffn}, l, kTagW1);
    s.w3 = add_param(prefix + "w3", LayerRole::kHidden, {d, ffn}, l, kTagW3);
    s.w2 = add_param(prefix + "w2", LayerRole::kHidden, {ffn, d}, l, kTagW2);
    model.layers.push_back(s);
  }
  model.final_norm = add_param("final_norm", LayerRole::kVector, {d}, config.n_layers, 0);

  model.attn_scale = attn_logit_scale(config.scheme, config.d_head);
  model.embed_multiplier = forward_multiplier(LayerRole::kEmbedding, config.scheme, config.base, m_d);
  model.unembed_multiplier = forward_multiplier(LayerRole::kUnembedding, config.scheme, config.base, m_d);
  const std::size_t heads = config.n_heads();
  for (std::size_t i = 1; i <= heads; ++i) {
    model.alibi_slopes.push_back(std::exp2(-8.0 * static_cast<double>(i) / static_cast<double>(heads)));
  }
  return model;
}

template <std::floating_point U, std::floating_point T>
TransformerModel<U> convert_model(const TransformerModel<T>& model) {
  TransformerModel<U> out;
  out.config = model.config;
  out.embedding = model.embedding;
  out.final_norm = model.final_norm;
  out.layers = model.layers;
  out.attn_scale = model.attn_scale;
  out.embed_multiplier = model.embed_multiplier;
  out.unembed_multiplier = model.unembed_multiplier;
  out.alibi_slopes = model.alibi_slopes;
  auto cast = [](const Tensor<T>& t, bool grad) {
    std::vector<U> data(t.data().begin(), t.data().end());
    return Tensor<U>(t.shape(), std::move(data), grad);
  };
  for (const auto& p : model.params) {
    Param<U> q;
    q.name = p.name;
    q.role = p.role;
    q.lr = p.lr;
    q.init_std = p.init_std;
    q.mask = p.mask;
    q.value = cast(p.value, p.value.requires_grad());
    if (p.mask_values.defined()) q.mask_values = cast(p.mask_values, false);
    out.params.push_back(std::move(q));
  }
  return out;
}

template <std::floating_point T>
ForwardResult<T> forward_loss(const TransformerModel<T>& model, Tape<T>& tape, std::span<const std::int64_t> tokens,
                              std::span<const std::int64_t> targets, std::size_t batch, std::size_t len) {
  const auto& c = model.config;
  if (tokens.size() != batch * len || targets.size() != batch * len) {
    throw ContractViolation("forward_loss: token and target counts must equal batch * len");
  }
  if (len == 0 || len > c.seq_len) throw ContractViolation("forward_loss: sequence longer than the context length");
  for (auto span : {tokens, targets}) {
    for (const auto id : span) {
      if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
        throw DomainError("forward_loss: token id " + std::to_string(id) + " outside the vocabulary");
      }
    }
  }
  const std::size_t d = c.d_model, heads = c.n_heads(), dh = c.d_head;
  const auto& P = model.params;

  ForwardResult<T> r;
  r.proj_in.resize(P.size());
  r.proj_out.resize(P.size());
  r.effective_weights.resize(P.size());
  auto project = [&](const Tensor<T>& x, std::size_t slot) {
    auto w = ops::mul(tape, P[slot].value, P[slot].mask_values);
    auto y = ops::matmul(tape, x, w);
    r.proj_in[slot] = x;
    r.proj_out[slot] = y;
    r.effective_weights[slot] = w;
    return y;
  };
  auto split_heads = [&](const Tensor<T>& x) {
    return ops::swap_axes12(tape, ops::reshape(tape, x, Shape{batch, len, heads, dh}));
  };

  auto x = ops::embedding(tape, P[model.embedding].value, tokens, Shape{batch, len});
  if (model.embed_multiplier != 1.0) x = ops::scale(tape, x, model.embed_multiplier);

  for (const auto& s : model.layers) {
    BlockStats st;
    auto h = ops::layer_norm(tape, x, P[s.ln1].value, c.ln_eps);
    auto q = project(h, s.wq);
    auto k = project(h, s.wk);
    auto v = project(h, s.wv);
    st.attn_proj = mean_abs_many<T>({q, k, v});
    auto scores = ops::matmul(tape, split_heads(q), ops::transpose(tape, split_heads(k)));
    scores = ops::scale(tape, scores, model.attn_scale);
    auto probs = ops::softmax(tape, ops::causal_bias(tape, scores, std::span<const double>(model.alibi_slopes)));
    auto ctx = ops::matmul(tape, probs, split_heads(v));
    ctx = ops::reshape(tape, ops::swap_axes12(tape, ctx), Shape{batch, len, d});
    auto attn_out = project(ctx, s.wo);
    x = ops::add(tape, x, attn_out);
    st.attn_out = mean_abs_tensor(attn_out);
    st.attn_resid = mean_abs_tensor(x);

    auto h2 = ops::layer_norm(tape, x, P[s.ln2].value, c.ln_eps);
    auto a = project(h2, s.w1);
    auto g = project(h2, s.w3);
    st.ffn_proj = mean_abs_many<T>({a, g});
    auto f = ops::mul(tape, ops::silu(tape, a), g);
    auto ffn_out = project(f, s.w2);
    x = ops::add(tape, x, ffn_out);
    st.ffn_out = mean_abs_tensor(ffn_out);
    st.ffn_resid = mean_abs_tensor(x);
    r.stats.push_back(st);
  }

  auto xf = ops::layer_norm(tape, x, P[model.final_norm].value, c.ln_eps);
  auto logits = ops::matmul(tape, xf, ops::transpose(tape, P[model.embedding].value));
  if (model.unembed_multiplier != 1.0) logits = ops::scale(tape, logits, model.unembed_multiplier);
  r.loss = ops::cross_entropy(tape, logits, targets);
  return r;
}

template <std::floating_point T>
ParamCount count_params(const TransformerModel<T>& model) {
  ParamCount count;
  for (const auto& p : model.params) {
    count.total += p.value.numel();
    if (p.masked()) {
      const std::size_t ones = p.mask->ones();
      count.nonzero += ones;
      count.hidden_names.push_back(p.name);
      count.wpn_per_layer.push_back(static_cast<double>(ones) / static_cast<double>(p.mask->d_out));
    } else {
      count.nonzero += p.value.numel();
    }
  }
  return count;
}

template <std::floating_point T>
std::size_t pruned_nonzeros(const TransformerModel<T>& model) {
  std::size_t bad = 0;
  for (const auto& p : model.params) {
    if (!p.masked()) continue;
    const auto w = p.value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!p.mask->bits[i] && w[i] != T(0)) ++bad;
    }
  }
  return bad;
}

template <std::floating_point T>
double mean_abs(std::span<const T> values) {
  if (values.empty()) return 0.0;
  double total = 0;
  for (const T v : values) total += std::abs(static_cast<double>(v));
  return total / static_cast<double>(values.size());
}

#define SUPAR_MODEL_INSTANTIATE(T)                                                                            \
  template struct TransformerModel<T>;                                                                      \
  template TransformerModel<T> build_model<T>(const ModelConfig&);                                          \
  template ForwardResult<T> forward_loss<T>(const TransformerModel<T>&, Tape<T>&, std::span<const std::int64_t>, \
                                            std::span<const std::int64_t>, std::size_t, std::size_t);       \
  template ParamCount count_params<T>(const TransformerModel<T>&);                                          \
  template std::size_t pruned_nonzeros<T>(const TransformerModel<T>&);                                      \
  template double mean_abs<T>(std::span<const T>);

SUPAR_MODEL_INSTANTIATE(float)
SUPAR_MODEL_INSTANTIATE(double)
SUPAR_MODEL_INSTANTIATE(long double)

template TransformerModel<long double> convert_model<long double, double>(const TransformerModel<double>&);
template TransformerModel<float> convert_model<float, double>(const TransformerModel<double>&);
template TransformerModel<double> convert_model<double, float>(const TransformerModel<float>&);

}  // namespace supar
