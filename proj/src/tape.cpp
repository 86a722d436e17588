// SPDX-License-Identifier: Apache-2.0
#include "supar/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "supar/errors.hpp"

namespace supar {

namespace {

constexpr std::array<std::pair<Primitive, std::string_view>, 14> kNames{{
    {Primitive::kMatMul, "matmul"},
    {Primitive::kAdd, "add"},
    {Primitive::kMul, "mul"},
    {Primitive::kScale, "scale"},
    {Primitive::kSilu, "silu"},
    {Primitive::kSoftmax, "softmax"},
    {Primitive::kLayerNorm, "layer_norm"},
    {Primitive::kEmbedding, "embedding"},
    {Primitive::kTranspose, "transpose"},
    {Primitive::kCrossEntropy, "cross_entropy"},
    {Primitive::kCausalBias, "causal_bias"},
    {Primitive::kReshape, "reshape"},
    {Primitive::kSwapAxes12, "swap_axes12"},
    {Primitive::kSum, "sum"},
}};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

[[noreturn]] void shape_error(Primitive kind, const std::string& detail) {
  throw ContractViolation(std::string(primitive_name(kind)) + ": " + detail);
}

void expect_arity(Primitive kind, std::size_t got, std::size_t want) {
  if (got != want) {
    shape_error(kind, "expected " + std::to_string(want) + " inputs, got " + std::to_string(got));
  }
}

// Leading-axis broadcast between two shapes. `small` repeats `outer` times
// inside `big`; when shapes are equal outer == 1 and big is input 0.
struct Broadcast {
  Shape out;
  std::size_t big = 0;
  std::size_t small = 1;
  std::size_t outer = 1;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Broadcast broadcast_rule(Primitive kind, const Shape& a, const Shape& b) {
  if (a == b) return {a, 0, 1, 1};
  if (a.size() > b.size() && is_suffix(b, a)) return {a, 0, 1, shape_numel(a) / shape_numel(b)};
  if (b.size() > a.size() && is_suffix(a, b)) return {b, 1, 0, shape_numel(b) / shape_numel(a)};
  shape_error(kind, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
}

}  // namespace

std::string_view primitive_name(Primitive kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  throw UnsupportedPrimitive("unknown primitive id " + std::to_string(static_cast<int>(kind)));
}

Primitive primitive_from_name(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  throw UnsupportedPrimitive("unsupported primitive '" + std::string(name) + "'");
}

template <std::floating_point T>
Tensor<T> Tape<T>::apply(Primitive kind, std::vector<Tensor<T>> inputs, PrimitiveAttrs attrs) {
  for (const auto& in : inputs) {
    if (!in.defined()) shape_error(kind, "undefined input tensor");
  }
  Shape out_shape;
  std::vector<T> out;
  std::vector<T> saved;

  switch (kind) {
    case Primitive::kMatMul: {
      expect_arity(kind, inputs.size(), 2);
      const auto& as = inputs[0].shape();
      const auto& bs = inputs[1].shape();
      if (as.size() < 2 || bs.size() < 2) {
        shape_error(kind, "operands must have rank >= 2, got " + shape_str(as) + " and " + shape_str(bs));
      }
      const std::size_t m = as[as.size() - 2], k = as.back();
      const std::size_t kb = bs[bs.size() - 2], n = bs.back();
      if (k != kb) shape_error(kind, "inner extents differ: " + shape_str(as) + " x " + shape_str(bs));
      if (bs.size() > 2 && (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin()))) {
        shape_error(kind, "batched operands need equal leading axes: " + shape_str(as) + " x " + shape_str(bs));
      }
      out_shape = as;
      out_shape.back() = n;
      out.resize(shape_numel(out_shape));
      const auto a = inputs[0].data();
      const auto b = inputs[1].data();
      if (bs.size() == 2) {
        const std::size_t rows = a.size() / k;
        MatMap<T>(out.data(), rows, n).noalias() =
            ConstMatMap<T>(a.data(), rows, k) * ConstMatMap<T>(b.data(), k, n);
      } else {
        const std::size_t batch = a.size() / (m * k);
        for (std::size_t i = 0; i < batch; ++i) {
          MatMap<T>(out.data() + i * m * n, m, n).noalias() =
              ConstMatMap<T>(a.data() + i * m * k, m, k) * ConstMatMap<T>(b.data() + i * k * n, k, n);
        }
      }
      break;
    }
    case Primitive::kAdd:
    case Primitive::kMul: {
      expect_arity(kind, inputs.size(), 2);
      const auto bc = broadcast_rule(kind, inputs[0].shape(), inputs[1].shape());
      out_shape = bc.out;
      const auto big = inputs[bc.big].data();
      const auto small = inputs[bc.small].data();
      const std::size_t inner = small.size();
      out.resize(big.size());
      for (std::size_t o = 0; o < bc.outer; ++o) {
        const T* bp = big.data() + o * inner;
        T* op = out.data() + o * inner;
        if (kind == Primitive::kAdd) {
          for (std::size_t i = 0; i < inner; ++i) op[i] = bp[i] + small[i];
        } else {
          for (std::size_t i = 0; i < inner; ++i) op[i] = bp[i] * small[i];
        }
      }
      break;
    }
    case Primitive::kScale: {
      expect_arity(kind, inputs.size(), 1);
      out_shape = inputs[0].shape();
      const auto x = inputs[0].data();
      const T s = static_cast<T>(attrs.scalar);
      out.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = s * x[i];
      break;
    }
    case Primitive::kSilu: {
      expect_arity(kind, inputs.size(), 1);
      out_shape = inputs[0].shape();
      const auto x = inputs[0].data();
      out.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / (T(1) + std::exp(-x[i]));
      break;
    }
    case Primitive::kSoftmax: {
      expect_arity(kind, inputs.size(), 1);
      out_shape = inputs[0].shape();
      if (out_shape.empty()) shape_error(kind, "needs rank >= 1");
      const auto x = inputs[0].data();
      const std::size_t cols = out_shape.back();
      out.resize(x.size());
      for (std::size_t r = 0; r < x.size() / cols; ++r) {
        const T* xr = x.data() + r * cols;
        T* yr = out.data() + r * cols;
        const T mx = *std::max_element(xr, xr + cols);
        T total = 0;
        for (std::size_t c = 0; c < cols; ++c) total += (yr[c] = std::exp(xr[c] - mx));
        for (std::size_t c = 0; c < cols; ++c) yr[c] /= total;
      }
      break;
    }
    case Primitive::kLayerNorm: {
      expect_arity(kind, inputs.size(), 2);
      out_shape = inputs[0].shape();
      const auto& gs = inputs[1].shape();
      if (out_shape.empty() || gs.size() != 1 || gs[0] != out_shape.back()) {
        shape_error(kind, "gain " + shape_str(gs) + " must match last axis of " + shape_str(out_shape));
      }
      if (attrs.eps < 0) shape_error(kind, "eps must be >= 0");
      const auto x = inputs[0].data();
      const auto g = inputs[1].data();
      const std::size_t cols = out_shape.back();
      const std::size_t rows = x.size() / cols;
      out.resize(x.size());
      saved.resize(2 * rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * cols;
        T mean = 0;
        for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
        mean /= static_cast<T>(cols);
        T var = 0;
        for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
        var /= static_cast<T>(cols);
        const T rstd = T(1) / std::sqrt(var + static_cast<T>(attrs.eps));
        saved[2 * r] = mean;
        saved[2 * r + 1] = rstd;
        T* yr = out.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) yr[c] = g[c] * ((xr[c] - mean) * rstd);
      }
      break;
    }
    case Primitive::kEmbedding: {
      expect_arity(kind, inputs.size(), 1);
      const auto& ws = inputs[0].shape();
      if (ws.size() != 2) shape_error(kind, "weight must be [V, d], got " + shape_str(ws));
      if (shape_numel(attrs.shape) != attrs.indices.size()) {
        shape_error(kind, "index shape " + shape_str(attrs.shape) + " does not match " +
                              std::to_string(attrs.indices.size()) + " indices");
      }
      const std::size_t vocab = ws[0], d = ws[1];
      out_shape = attrs.shape;
      out_shape.push_back(d);
      out.resize(attrs.indices.size() * d);
      const auto w = inputs[0].data();
      for (std::size_t i = 0; i < attrs.indices.size(); ++i) {
        const auto id = attrs.indices[i];
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
          shape_error(kind, "index " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab));
        }
        std::copy_n(w.data() + static_cast<std::size_t>(id) * d, d, out.data() + i * d);
      }
      break;
    }
    case Primitive::kTranspose: {
      expect_arity(kind, inputs.size(), 1);
      const auto& s = inputs[0].shape();
      if (s.size() < 2) shape_error(kind, "needs rank >= 2, got " + shape_str(s));
      out_shape = s;
      std::swap(out_shape[s.size() - 1], out_shape[s.size() - 2]);
      const std::size_t r = s[s.size() - 2], c = s.back();
      const auto x = inputs[0].data();
      out.resize(x.size());
      for (std::size_t b = 0; b < x.size() / (r * c); ++b) {
        MatMap<T>(out.data() + b * r * c, c, r) = ConstMatMap<T>(x.data() + b * r * c, r, c).transpose();
      }
      break;
    }
    case Primitive::kCrossEntropy: {
      expect_arity(kind, inputs.size(), 1);
      const auto& s = inputs[0].shape();
      if (s.empty()) shape_error(kind, "logits need rank >= 1");
      const std::size_t vocab = s.back();
      const auto x = inputs[0].data();
      const std::size_t rows = x.size() / vocab;
      if (attrs.indices.size() != rows) {
        shape_error(kind, std::to_string(attrs.indices.size()) + " targets for " + std::to_string(rows) +
                              " rows of " + shape_str(s));
      }
      saved.resize(x.size());
      T total = 0;
      for (std::size_t r = 0; r < rows; ++r) {
        const auto target = attrs.indices[r];
        if (target < 0 || static_cast<std::size_t>(target) >= vocab) {
          shape_error(kind, "target " + std::to_string(target) + " outside " + std::to_string(vocab) + " classes");
        }
        const T* xr = x.data() + r * vocab;
        T* pr = saved.data() + r * vocab;
        const T mx = *std::max_element(xr, xr + vocab);
        T z = 0;
        for (std::size_t c = 0; c < vocab; ++c) z += (pr[c] = std::exp(xr[c] - mx));
        for (std::size_t c = 0; c < vocab; ++c) pr[c] /= z;
        total += std::log(z) + mx - xr[target];
      }
      out_shape = {};
      out = {total / static_cast<T>(rows)};
      break;
    }
    case Primitive::kCausalBias: {
      expect_arity(kind, inputs.size(), 1);
      const auto& s = inputs[0].shape();
      if (s.size() != 4 || s[2] != s[3]) shape_error(kind, "scores must be [B, H, T, T], got " + shape_str(s));
      if (attrs.values.size() != s[1]) {
        shape_error(kind, std::to_string(attrs.values.size()) + " slopes for " + std::to_string(s[1]) + " heads");
      }
      out_shape = s;
      const auto x = inputs[0].data();
      out.resize(x.size());
      const std::size_t heads = s[1], len = s[2];
      constexpr T neg_inf = -std::numeric_limits<T>::infinity();
      for (std::size_t b = 0; b < s[0]; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const T slope = static_cast<T>(attrs.values[h]);
          const std::size_t base = (b * heads + h) * len * len;
          for (std::size_t i = 0; i < len; ++i) {
            for (std::size_t j = 0; j < len; ++j) {
              const std::size_t idx = base + i * len + j;
              out[idx] = j <= i ? x[idx] - slope * static_cast<T>(i - j) : neg_inf;
            }
          }
        }
      }
      break;
    }
    case Primitive::kReshape: {
      expect_arity(kind, inputs.size(), 1);
      if (shape_numel(attrs.shape) != inputs[0].numel()) {
        shape_error(kind, "cannot view " + shape_str(inputs[0].shape()) + " as " + shape_str(attrs.shape));
      }
      out_shape = attrs.shape;
      const auto x = inputs[0].data();
      out.assign(x.begin(), x.end());
      break;
    }
    case Primitive::kSwapAxes12: {
      expect_arity(kind, inputs.size(), 1);
      const auto& s = inputs[0].shape();
      if (s.size() != 4) shape_error(kind, "needs rank 4, got " + shape_str(s));
      out_shape = {s[0], s[2], s[1], s[3]};
      const auto x = inputs[0].data();
      out.resize(x.size());
      const std::size_t d = s[3];
      for (std::size_t a = 0; a < s[0]; ++a)
        for (std::size_t b = 0; b < s[1]; ++b)
          for (std::size_t c = 0; c < s[2]; ++c)
            std::copy_n(x.data() + ((a * s[1] + b) * s[2] + c) * d, d,
                        out.data() + ((a * s[2] + c) * s[1] + b) * d);
      break;
    }
    case Primitive::kSum: {
      expect_arity(kind, inputs.size(), 1);
      const auto x = inputs[0].data();
      T total = 0;
      for (T v : x) total += v;
      out_shape = {};
      out = {total};
      break;
    }
    default:
      throw UnsupportedPrimitive("unsupported primitive id " + std::to_string(static_cast<int>(kind)));
  }

  const bool record = std::any_of(inputs.begin(), inputs.end(), [](const auto& t) { return t.requires_grad(); });
  Tensor<T> result(std::move(out_shape), std::move(out), record);
  result.impl_->frozen = true;
  if (record) entries_.push_back(Entry{kind, std::move(inputs), result, std::move(attrs), std::move(saved)});
  return result;
}

template <std::floating_point T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractViolation("backward: loss must be a scalar, got " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  std::size_t last = entries_.size();
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (entries_[i].output.same_storage(loss)) {
      last = i;
      break;
    }
  }
  if (last == entries_.size()) throw ContractViolation("backward: loss was not produced on this tape");

  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (in.requires_grad()) in.zero_grad();
    }
    e.output.zero_grad();
  }
  std::unordered_set<const void*> reached{loss.impl_.get()};
  loss.impl_->grad[0] = T(1);

  for (std::size_t idx = last + 1; idx-- > 0;) {
    auto& e = entries_[idx];
    if (!reached.contains(e.output.impl_.get())) continue;
    const std::vector<T>& dy = e.output.impl_->grad;
    auto wants = [&](std::size_t i) {
      if (!e.inputs[i].requires_grad()) return false;
      reached.insert(e.inputs[i].impl_.get());
      return true;
    };
    auto gin = [&](std::size_t i) -> std::vector<T>& { return e.inputs[i].impl_->grad; };

    switch (e.kind) {
      case Primitive::kMatMul: {
        const auto& as = e.inputs[0].shape();
        const auto& bs = e.inputs[1].shape();
        const std::size_t m = as[as.size() - 2], k = as.back(), n = bs.back();
        const auto a = e.inputs[0].data();
        const auto b = e.inputs[1].data();
        if (bs.size() == 2) {
          const std::size_t rows = a.size() / k;
          ConstMatMap<T> dY(dy.data(), rows, n);
          if (wants(0)) MatMap<T>(gin(0).data(), rows, k).noalias() += dY * ConstMatMap<T>(b.data(), k, n).transpose();
          if (wants(1)) MatMap<T>(gin(1).data(), k, n).noalias() += ConstMatMap<T>(a.data(), rows, k).transpose() * dY;
        } else {
          const std::size_t batch = a.size() / (m * k);
          const bool da = wants(0), db = wants(1);
          for (std::size_t i = 0; i < batch; ++i) {
            ConstMatMap<T> dY(dy.data() + i * m * n, m, n);
            if (da) {
              MatMap<T>(gin(0).data() + i * m * k, m, k).noalias() +=
                  dY * ConstMatMap<T>(b.data() + i * k * n, k, n).transpose();
            }
            if (db) {
              MatMap<T>(gin(1).data() + i * k * n, k, n).noalias() +=
                  ConstMatMap<T>(a.data() + i * m * k, m, k).transpose() * dY;
            }
          }
        }
        break;
      }
      case Primitive::kAdd:
      case Primitive::kMul: {
        const auto bc = broadcast_rule(e.kind, e.inputs[0].shape(), e.inputs[1].shape());
        const auto big = e.inputs[bc.big].data();
        const auto small = e.inputs[bc.small].data();
        const std::size_t inner = small.size();
        const bool mul = e.kind == Primitive::kMul;
        if (wants(bc.big)) {
          auto& g = gin(bc.big);
          for (std::size_t o = 0; o < bc.outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) g[o * inner + i] += mul ? dy[o * inner + i] * small[i] : dy[o * inner + i];
        }
        if (wants(bc.small)) {
          auto& g = gin(bc.small);
          for (std::size_t o = 0; o < bc.outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) g[i] += mul ? dy[o * inner + i] * big[o * inner + i] : dy[o * inner + i];
        }
        break;
      }
      case Primitive::kScale: {
        if (wants(0)) {
          const T s = static_cast<T>(e.attrs.scalar);
          auto& g = gin(0);
          for (std::size_t i = 0; i < dy.size(); ++i) g[i] += s * dy[i];
        }
        break;
      }
      case Primitive::kSilu: {
        if (wants(0)) {
          const auto x = e.inputs[0].data();
          auto& g = gin(0);
          for (std::size_t i = 0; i < dy.size(); ++i) {
            const T sig = T(1) / (T(1) + std::exp(-x[i]));
            g[i] += dy[i] * sig * (T(1) + x[i] * (T(1) - sig));
          }
        }
        break;
      }
      case Primitive::kSoftmax: {
        if (wants(0)) {
          const auto y = e.output.data();
          const std::size_t cols = e.output.shape().back();
          auto& g = gin(0);
          for (std::size_t r = 0; r < y.size() / cols; ++r) {
            const std::size_t off = r * cols;
            T dot = 0;
            for (std::size_t c = 0; c < cols; ++c) dot += y[off + c] * dy[off + c];
            for (std::size_t c = 0; c < cols; ++c) g[off + c] += y[off + c] * (dy[off + c] - dot);
          }
        }
        break;
      }
      case Primitive::kLayerNorm: {
        const auto x = e.inputs[0].data();
        const auto gain = e.inputs[1].data();
        const std::size_t cols = gain.size();
        const std::size_t rows = x.size() / cols;
        const bool dx = wants(0), dg = wants(1);
        std::vector<T> xhat(cols), dxhat(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const T mean = e.saved[2 * r], rstd = e.saved[2 * r + 1];
          const std::size_t off = r * cols;
          T sum_d = 0, sum_dx = 0;
          for (std::size_t c = 0; c < cols; ++c) {
            xhat[c] = (x[off + c] - mean) * rstd;
            dxhat[c] = dy[off + c] * gain[c];
            sum_d += dxhat[c];
            sum_dx += dxhat[c] * xhat[c];
          }
          if (dg) {
            auto& g = gin(1);
            for (std::size_t c = 0; c < cols; ++c) g[c] += dy[off + c] * xhat[c];
          }
          if (dx) {
            auto& g = gin(0);
            const T inv = T(1) / static_cast<T>(cols);
            for (std::size_t c = 0; c < cols; ++c) {
              g[off + c] += rstd * (dxhat[c] - inv * sum_d - xhat[c] * inv * sum_dx);
            }
          }
        }
        break;
      }
      case Primitive::kEmbedding: {
        if (wants(0)) {
          const std::size_t d = e.inputs[0].shape()[1];
          auto& g = gin(0);
          for (std::size_t i = 0; i < e.attrs.indices.size(); ++i) {
            T* row = g.data() + static_cast<std::size_t>(e.attrs.indices[i]) * d;
            for (std::size_t c = 0; c < d; ++c) row[c] += dy[i * d + c];
          }
        }
        break;
      }
      case Primitive::kTranspose: {
        if (wants(0)) {
          const auto& s = e.inputs[0].shape();
          const std::size_t r = s[s.size() - 2], c = s.back();
          auto& g = gin(0);
          for (std::size_t b = 0; b < dy.size() / (r * c); ++b) {
            MatMap<T>(g.data() + b * r * c, r, c) += ConstMatMap<T>(dy.data() + b * r * c, c, r).transpose();
          }
        }
        break;
      }
      case Primitive::kCrossEntropy: {
        if (wants(0)) {
          const std::size_t vocab = e.inputs[0].shape().back();
          const std::size_t rows = e.attrs.indices.size();
          const T scale = dy[0] / static_cast<T>(rows);
          auto& g = gin(0);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < vocab; ++c) g[r * vocab + c] += scale * e.saved[r * vocab + c];
            g[r * vocab + static_cast<std::size_t>(e.attrs.indices[r])] -= scale;
          }
        }
        break;
      }
      case Primitive::kCausalBias:
      case Primitive::kReshape: {
        if (wants(0)) {
          auto& g = gin(0);
          for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
        }
        break;
      }
      case Primitive::kSwapAxes12: {
        if (wants(0)) {
          const auto& s = e.inputs[0].shape();
          const std::size_t d = s[3];
          auto& g = gin(0);
          for (std::size_t a = 0; a < s[0]; ++a)
            for (std::size_t b = 0; b < s[1]; ++b)
              for (std::size_t c = 0; c < s[2]; ++c) {
                T* dst = g.data() + ((a * s[1] + b) * s[2] + c) * d;
                const T* src = dy.data() + ((a * s[2] + c) * s[1] + b) * d;
                for (std::size_t i = 0; i < d; ++i) dst[i] += src[i];
              }
        }
        break;
      }
      case Primitive::kSum: {
        if (wants(0)) {
          auto& g = gin(0);
          for (auto& v : g) v += dy[0];
        }
        break;
      }
    }
  }
}

template class Tape<float>;
template class Tape<double>;
template class Tape<long double>;

}  // namespace supar
