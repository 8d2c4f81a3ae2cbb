/* Copyright 2026 The zsl-music Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// A small set of differentiable layers with hand-written backward passes,
// a parameter store with gradient accumulators, and a central-difference
// gradient checker.
//
// Conventions:
//   * Feature maps are [channels x height x width], one sample at a time.
//   * conv2d is cross-correlation (no kernel flip) with "same" zero padding
//     of kernel/2 on every side.
//   * maxpool2d uses non-overlapping windows; ties route the gradient to the
//     first element in row-major order.
//   * Templates are instantiated with double for verification and float for
//     training.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zsl/error.hpp"
#include "zsl/ndarray.hpp"

namespace zsl {

enum class LayerKind { conv2d, relu, maxpool2d, global_avg_pool, dense, l2norm };

inline const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::dense: return "dense";
    case LayerKind::l2norm: return "l2norm";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;  // parameter prefix for conv2d / dense
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pool = 0;
  std::size_t in_features = 0;
  std::size_t out_features = 0;

  static LayerSpec conv2d(std::string name, std::size_t in, std::size_t out, std::size_t kernel,
                          std::size_t stride = 1) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.name = std::move(name);
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = kernel;
    s.stride = stride;
    return s;
  }
  static LayerSpec relu() { return {}; }
  static LayerSpec maxpool2d(std::size_t pool) {
    LayerSpec s;
    s.kind = LayerKind::maxpool2d;
    s.pool = pool;
    return s;
  }
  static LayerSpec global_avg_pool() {
    LayerSpec s;
    s.kind = LayerKind::global_avg_pool;
    return s;
  }
  static LayerSpec dense(std::string name, std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.name = std::move(name);
    s.in_features = in;
    s.out_features = out;
    return s;
  }
  static LayerSpec l2norm() {
    LayerSpec s;
    s.kind = LayerKind::l2norm;
    return s;
  }

  std::string weight_name() const { return name + ".weight"; }
  std::string bias_name() const { return name + ".bias"; }
  bool has_params() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }

  std::size_t padding() const { return kernel / 2; }

  std::string describe() const {
    std::string s = to_string(kind);
    if (!name.empty()) s += " '" + name + "'";
    return s;
  }

  /// Output shape for `in`, or ShapeError-style DataError when incompatible.
  Shape output_shape(const Shape& in) const {
    auto fail = [&](const std::string& why) -> Shape {
      throw DataError(describe() + ": input shape " + shape_string(in) + " incompatible: " + why);
    };
    switch (kind) {
      case LayerKind::conv2d: {
        if (in.size() != 3) return fail("expected [channels x height x width]");
        if (in[0] != in_channels) {
          return fail("expected " + std::to_string(in_channels) + " channels");
        }
        const std::size_t p = padding();
        if (kernel == 0 || stride == 0) return fail("kernel and stride must be positive");
        if (in[1] + 2 * p < kernel || in[2] + 2 * p < kernel) return fail("kernel exceeds padded input");
        return {out_channels, (in[1] + 2 * p - kernel) / stride + 1,
                (in[2] + 2 * p - kernel) / stride + 1};
      }
      case LayerKind::relu:
        return in;
      case LayerKind::maxpool2d:
        if (in.size() != 3) return fail("expected [channels x height x width]");
        if (pool == 0 || in[1] < pool || in[2] < pool) return fail("pool window exceeds input");
        return {in[0], in[1] / pool, in[2] / pool};
      case LayerKind::global_avg_pool:
        if (in.size() != 3 || in[1] * in[2] == 0) return fail("expected nonempty [channels x height x width]");
        return {in[0]};
      case LayerKind::dense:
        if (shape_numel(in) != in_features) {
          return fail("expected " + std::to_string(in_features) + " features");
        }
        return {out_features};
      case LayerKind::l2norm:
        if (shape_numel(in) == 0) return fail("empty input");
        return {shape_numel(in)};
    }
    return fail("unknown layer kind");
  }

  void validate() const {
    switch (kind) {
      case LayerKind::conv2d:
        if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 || name.empty()) {
          throw UsageError(describe() + ": channels, kernel, stride and name must be set");
        }
        break;
      case LayerKind::maxpool2d:
        if (pool == 0) throw UsageError("maxpool2d: pool must be positive");
        break;
      case LayerKind::dense:
        if (in_features == 0 || out_features == 0 || name.empty()) {
          throw UsageError(describe() + ": features and name must be set");
        }
        break;
      default:
        break;
    }
  }
};

/// Named parameters plus a gradient accumulator of the same shape for each.
/// Iteration order is the lexicographic order of names.
template <class T>
class ParameterStore {
 public:
  void add(const std::string& name, NdArray<T> value) {
    if (entries_.contains(name)) throw UsageError("ParameterStore: duplicate parameter '" + name + "'");
    Entry e;
    e.grad = NdArray<T>(value.shape());
    e.value = std::move(value);
    entries_.emplace(name, std::move(e));
  }

  bool contains(const std::string& name) const { return entries_.contains(name); }

  NdArray<T>& value(const std::string& name) { return entry(name).value; }
  const NdArray<T>& value(const std::string& name) const { return entry(name).value; }
  NdArray<T>& grad(const std::string& name) { return entry(name).grad; }
  const NdArray<T>& grad(const std::string& name) const { return entry(name).grad; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
  }

  std::size_t size() const { return entries_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, e] : entries_) e.grad.fill(T{0});
  }

  /// Adds other's gradients into ours, name by name.
  void accumulate_grads_from(const ParameterStore& other) {
    for (auto& [name, e] : entries_) {
      const auto& g = other.grad(name);
      for (std::size_t i = 0; i < g.size(); ++i) e.grad[i] += g[i];
    }
  }

  template <class U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>());
    return out;
  }

  /// True when every parameter value is bitwise equal.
  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (const auto& [name, e] : a.entries_) {
      auto it = b.entries_.find(name);
      if (it == b.entries_.end() || !(it->second.value == e.value)) return false;
    }
    return true;
  }

 private:
  struct Entry {
    NdArray<T> value;
    NdArray<T> grad;
  };

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DataError("ParameterStore: no parameter named '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DataError("ParameterStore: no parameter named '" + name + "'");
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

/// What a layer's backward pass needs from its forward pass.
template <class T>
struct LayerCache {
  LayerKind kind = LayerKind::relu;
  std::string layer;
  Shape input_shape;
  Shape output_shape;
  NdArray<T> input;    // relu, dense
  NdArray<T> columns;  // conv2d im2col buffer
  NdArray<T> output;   // l2norm
  T norm{};            // l2norm
  std::vector<std::size_t> argmax;  // maxpool2d, flat input index per output
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
void im2col(const NdArray<T>& x, const LayerSpec& s, const Shape& out_shape, NdArray<T>& cols) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t Ho = out_shape[1], Wo = out_shape[2];
  const std::size_t k = s.kernel, st = s.stride;
  const auto p = static_cast<std::ptrdiff_t>(s.padding());
  cols = NdArray<T>({C * k * k, Ho * Wo});
  T* dst = cols.data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * st + ky) - p;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill_n(dst, Wo, T{0});
            dst += Wo;
            continue;
          }
          const T* row = x.data() + (c * H + static_cast<std::size_t>(iy)) * W;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * st + kx) - p;
            *dst++ = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) ? T{0}
                                                                       : row[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const NdArray<T>& cols, const LayerSpec& s, const Shape& in_shape,
            const Shape& out_shape, NdArray<T>& dx) {
  const std::size_t C = in_shape[0], H = in_shape[1], W = in_shape[2];
  const std::size_t Ho = out_shape[1], Wo = out_shape[2];
  const std::size_t k = s.kernel, st = s.stride;
  const auto p = static_cast<std::ptrdiff_t>(s.padding());
  dx = NdArray<T>(in_shape);
  const T* src = cols.data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * st + ky) - p;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
            src += Wo;
            continue;
          }
          T* row = dx.data() + (c * H + static_cast<std::size_t>(iy)) * W;
          for (std::size_t ox = 0; ox < Wo; ++ox, ++src) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * st + kx) - p;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) row[static_cast<std::size_t>(ix)] += *src;
          }
        }
      }
    }
  }
}

template <class T>
void check_param_shape(const LayerSpec& s, const NdArray<T>& w, const NdArray<T>& b,
                       const Shape& w_shape) {
  if (w.shape() != w_shape || b.shape() != Shape{w_shape[0]}) {
    throw DataError(s.describe() + ": parameter shapes " + shape_string(w.shape()) + " / " +
                    shape_string(b.shape()) + " do not match expected " + shape_string(w_shape));
  }
}

}  // namespace detail

/// Runs one layer. Returns the output and the cache its backward pass needs.
template <class T>
std::pair<NdArray<T>, LayerCache<T>> layer_forward(const LayerSpec& spec,
                                                   const ParameterStore<T>& params,
                                                   const NdArray<T>& input) {
  using detail::RowMatrix;
  LayerCache<T> cache;
  cache.kind = spec.kind;
  cache.layer = spec.name;
  cache.input_shape = input.shape();
  cache.output_shape = spec.output_shape(input.shape());
  NdArray<T> out(cache.output_shape);

  switch (spec.kind) {
    case LayerKind::conv2d: {
      const auto& w = params.value(spec.weight_name());
      const auto& b = params.value(spec.bias_name());
      detail::check_param_shape(spec, w, b,
                                {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
      detail::im2col(input, spec, cache.output_shape, cache.columns);
      const auto K = static_cast<Eigen::Index>(spec.in_channels * spec.kernel * spec.kernel);
      const auto N = static_cast<Eigen::Index>(cache.output_shape[1] * cache.output_shape[2]);
      const auto M = static_cast<Eigen::Index>(spec.out_channels);
      Eigen::Map<const RowMatrix<T>> W(w.data(), M, K);
      Eigen::Map<const RowMatrix<T>> cols(cache.columns.data(), K, N);
      Eigen::Map<RowMatrix<T>> Y(out.data(), M, N);
      Y.noalias() = W * cols;
      for (Eigen::Index r = 0; r < M; ++r) Y.row(r).array() += b[static_cast<std::size_t>(r)];
      break;
    }
    case LayerKind::relu: {
      cache.input = input;
      for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
      break;
    }
    case LayerKind::maxpool2d: {
      const std::size_t C = input.dim(0), W = input.dim(2);
      const std::size_t Ho = cache.output_shape[1], Wo = cache.output_shape[2];
      const std::size_t P = spec.pool;
      cache.argmax.resize(out.size());
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            std::size_t best = (c * input.dim(1) + oy * P) * W + ox * P;
            for (std::size_t dy = 0; dy < P; ++dy) {
              for (std::size_t dx = 0; dx < P; ++dx) {
                const std::size_t idx = (c * input.dim(1) + oy * P + dy) * W + ox * P + dx;
                if (input[idx] > input[best]) best = idx;
              }
            }
            const std::size_t o = (c * Ho + oy) * Wo + ox;
            cache.argmax[o] = best;
            out[o] = input[best];
          }
        }
      }
      break;
    }
    case LayerKind::global_avg_pool: {
      const std::size_t C = input.dim(0), HW = input.dim(1) * input.dim(2);
      for (std::size_t c = 0; c < C; ++c) {
        T acc{0};
        for (std::size_t i = 0; i < HW; ++i) acc += input[c * HW + i];
        out[c] = acc / static_cast<T>(HW);
      }
      break;
    }
    case LayerKind::dense: {
      const auto& w = params.value(spec.weight_name());
      const auto& b = params.value(spec.bias_name());
      detail::check_param_shape(spec, w, b, {spec.out_features, spec.in_features});
      cache.input = input;
      const auto M = static_cast<Eigen::Index>(spec.out_features);
      const auto K = static_cast<Eigen::Index>(spec.in_features);
      Eigen::Map<const RowMatrix<T>> W(w.data(), M, K);
      Eigen::Map<const detail::ColVector<T>> x(input.data(), K);
      Eigen::Map<const detail::ColVector<T>> bias(b.data(), M);
      Eigen::Map<detail::ColVector<T>> y(out.data(), M);
      y.noalias() = W * x;
      y += bias;
      break;
    }
    case LayerKind::l2norm: {
      T s{0};
      for (std::size_t i = 0; i < input.size(); ++i) s += input[i] * input[i];
      const T n = std::sqrt(s);
      if (!(n > T{0}) || !std::isfinite(static_cast<double>(n))) {
        throw NumericalError("l2norm: input has zero or non-finite norm");
      }
      for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] / n;
      cache.norm = n;
      cache.output = out;
      break;
    }
  }
  return {std::move(out), std::move(cache)};
}

/// Backward pass of one layer. Parameter gradients are added into `grads`
/// (which must hold accumulators for this layer's parameters); the gradient
/// with respect to the layer input is returned.
template <class T>
NdArray<T> layer_backward(const LayerSpec& spec, const LayerCache<T>& cache,
                          const NdArray<T>& grad_output, ParameterStore<T>& grads) {
  using detail::RowMatrix;
  if (cache.kind != spec.kind || cache.layer != spec.name) {
    throw UsageError("layer_backward: cache from " + std::string(to_string(cache.kind)) +
                     " does not belong to " + spec.describe());
  }
  if (grad_output.shape() != cache.output_shape) {
    throw DataError(spec.describe() + " backward: grad_output shape " +
                    shape_string(grad_output.shape()) + " != forward output shape " +
                    shape_string(cache.output_shape));
  }
  NdArray<T> gin(cache.input_shape);
  switch (spec.kind) {
    case LayerKind::conv2d: {
      const auto& w = grads.value(spec.weight_name());
      auto& dw = grads.grad(spec.weight_name());
      auto& db = grads.grad(spec.bias_name());
      const auto K = static_cast<Eigen::Index>(spec.in_channels * spec.kernel * spec.kernel);
      const auto N = static_cast<Eigen::Index>(cache.output_shape[1] * cache.output_shape[2]);
      const auto M = static_cast<Eigen::Index>(spec.out_channels);
      if (cache.columns.shape() != Shape{static_cast<std::size_t>(K), static_cast<std::size_t>(N)}) {
        throw UsageError(spec.describe() + " backward: stale cache");
      }
      Eigen::Map<const RowMatrix<T>> W(w.data(), M, K);
      Eigen::Map<const RowMatrix<T>> cols(cache.columns.data(), K, N);
      Eigen::Map<const RowMatrix<T>> G(grad_output.data(), M, N);
      Eigen::Map<RowMatrix<T>> dW(dw.data(), M, K);
      dW.noalias() += G * cols.transpose();
      // Plain loop: Eigen's vectorized sum() peels by address alignment, which
      // would make the rounding depend on where the buffer was allocated.
      for (Eigen::Index r = 0; r < M; ++r) {
        T s{0};
        for (Eigen::Index c = 0; c < N; ++c) s += G(r, c);
        db[static_cast<std::size_t>(r)] += s;
      }
      NdArray<T> dcols({static_cast<std::size_t>(K), static_cast<std::size_t>(N)});
      Eigen::Map<RowMatrix<T>> dC(dcols.data(), K, N);
      dC.noalias() = W.transpose() * G;
      detail::col2im(dcols, spec, cache.input_shape, cache.output_shape, gin);
      break;
    }
    case LayerKind::relu: {
      for (std::size_t i = 0; i < gin.size(); ++i) {
        gin[i] = cache.input[i] > T{0} ? grad_output[i] : T{0};
      }
      break;
    }
    case LayerKind::maxpool2d: {
      if (cache.argmax.size() != grad_output.size()) throw UsageError("maxpool2d backward: stale cache");
      for (std::size_t o = 0; o < grad_output.size(); ++o) gin[cache.argmax[o]] += grad_output[o];
      break;
    }
    case LayerKind::global_avg_pool: {
      const std::size_t C = cache.input_shape[0];
      const std::size_t HW = cache.input_shape[1] * cache.input_shape[2];
      for (std::size_t c = 0; c < C; ++c) {
        const T g = grad_output[c] / static_cast<T>(HW);
        std::fill_n(gin.data() + c * HW, HW, g);
      }
      break;
    }
    case LayerKind::dense: {
      const auto& w = grads.value(spec.weight_name());
      auto& dw = grads.grad(spec.weight_name());
      auto& db = grads.grad(spec.bias_name());
      const auto M = static_cast<Eigen::Index>(spec.out_features);
      const auto K = static_cast<Eigen::Index>(spec.in_features);
      if (cache.input.size() != static_cast<std::size_t>(K)) throw UsageError("dense backward: stale cache");
      Eigen::Map<const RowMatrix<T>> W(w.data(), M, K);
      Eigen::Map<const detail::ColVector<T>> x(cache.input.data(), K);
      Eigen::Map<const detail::ColVector<T>> g(grad_output.data(), M);
      Eigen::Map<RowMatrix<T>> dW(dw.data(), M, K);
      dW.noalias() += g * x.transpose();
      Eigen::Map<detail::ColVector<T>> dB(db.data(), M);
      dB += g;
      Eigen::Map<detail::ColVector<T>> dx(gin.data(), K);
      dx.noalias() = W.transpose() * g;
      break;
    }
    case LayerKind::l2norm: {
      if (cache.output.size() != grad_output.size()) throw UsageError("l2norm backward: stale cache");
      T radial{0};
      for (std::size_t i = 0; i < grad_output.size(); ++i) radial += cache.output[i] * grad_output[i];
      for (std::size_t i = 0; i < gin.size(); ++i) {
        gin[i] = (grad_output[i] - cache.output[i] * radial) / cache.norm;
      }
      break;
    }
  }
  return gin;
}

/// Forward through a chain of layers, keeping every cache.
template <class T>
NdArray<T> sequential_forward(std::span<const LayerSpec> layers, const ParameterStore<T>& params,
                              NdArray<T> x, std::vector<LayerCache<T>>* caches) {
  if (caches) caches->clear();
  for (const auto& spec : layers) {
    auto [y, cache] = layer_forward(spec, params, x);
    if (caches) caches->push_back(std::move(cache));
    x = std::move(y);
  }
  return x;
}

template <class T>
NdArray<T> sequential_backward(std::span<const LayerSpec> layers,
                               const std::vector<LayerCache<T>>& caches, NdArray<T> grad,
                               ParameterStore<T>& grads) {
  if (caches.size() != layers.size()) throw UsageError("sequential_backward: cache count mismatch");
  for (std::size_t i = layers.size(); i-- > 0;) {
    grad = layer_backward(layers[i], caches[i], grad, grads);
  }
  return grad;
}

template <class T>
struct CosineResult {
  T value{};
  std::vector<T> grad_a;
  std::vector<T> grad_b;
};

/// a.b / (|a| |b|) with gradients with respect to both arguments.
template <class T>
CosineResult<T> cosine_similarity(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw DataError("cosine_similarity: length mismatch " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  T dot{0}, na2{0}, nb2{0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na2 += a[i] * a[i];
    nb2 += b[i] * b[i];
  }
  if (!(na2 > T{0}) || !(nb2 > T{0})) throw NumericalError("cosine_similarity: zero-norm input");
  const T na = std::sqrt(na2), nb = std::sqrt(nb2);
  CosineResult<T> r;
  r.value = dot / (na * nb);
  r.grad_a.resize(a.size());
  r.grad_b.resize(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    r.grad_a[i] = b[i] / (na * nb) - r.value * a[i] / na2;
    r.grad_b[i] = a[i] / (na * nb) - r.value * b[i] / nb2;
  }
  return r;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
};

/// A scalar objective over a parameter store. When `want_grad` is true it
/// must also add d(objective)/d(parameter) into the store's accumulators.
using GradFunction = std::function<double(ParameterStore<double>&, bool want_grad)>;

/// Compares the analytic gradient of `f` at `point` against central
/// differences (f(x + eps e) - f(x - eps e)) / 2 eps, coordinate by
/// coordinate. Relative error uses max(1, |analytic|, |numeric|) as the
/// denominator. `point` is restored before returning.
inline GradCheckResult check_gradient(const GradFunction& f, ParameterStore<double>& point,
                                      double epsilon = 1e-5) {
  point.zero_grad();
  const double f0 = f(point, true);
  if (!std::isfinite(f0)) throw NumericalError("check_gradient: non-finite value at base point");
  std::map<std::string, NdArray<double>> analytic;
  for (const auto& name : point.names()) analytic.emplace(name, point.grad(name));

  GradCheckResult result;
  for (const auto& name : point.names()) {
    auto& values = point.value(name);
    const auto& grad = analytic.at(name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + epsilon;
      const double fp = f(point, false);
      values[i] = orig - epsilon;
      const double fm = f(point, false);
      values[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericalError("check_gradient: non-finite value probing " + name + "[" +
                             std::to_string(i) + "]");
      }
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double denom = std::max({1.0, std::abs(grad[i]), std::abs(numeric)});
      const double err = std::abs(grad[i] - numeric) / denom;
      ++result.probes;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_parameter = name;
        result.worst_index = i;
      }
    }
  }
  point.zero_grad();
  return result;
}

}  // namespace zsl
