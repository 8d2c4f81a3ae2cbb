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

// Audio branch: (conv -> relu -> maxpool) x blocks -> global average pool ->
// dense(joint_dim) -> l2norm, mapping a [patch_frames x n_mels] patch to a
// unit-norm point in the joint space.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "zsl/diff_core.hpp"
#include "zsl/dsp.hpp"
#include "zsl/semantic_point.hpp"

namespace zsl {

struct EncoderConfig {
  std::size_t patch_frames = 128;
  std::size_t n_mels = 128;
  std::vector<std::size_t> channels{16, 32, 64, 64};
  std::size_t kernel = 3;
  std::size_t pool = 2;
  std::size_t joint_dim = 256;
  std::size_t patch_stride = 64;

  std::size_t blocks() const { return channels.size(); }

  void validate() const {
    if (channels.empty()) throw UsageError("encoder: at least one conv block is required");
    for (auto c : channels) {
      if (c == 0) throw UsageError("encoder: channel counts must be positive");
    }
    if (kernel == 0 || kernel % 2 == 0) throw UsageError("encoder: kernel must be odd and positive");
    if (pool == 0) throw UsageError("encoder: pool must be positive");
    if (joint_dim == 0) throw UsageError("encoder: joint_dim must be positive");
    if (patch_stride == 0) throw UsageError("encoder: patch_stride must be positive");
    std::size_t h = patch_frames, w = n_mels;
    for (std::size_t b = 0; b < channels.size(); ++b) {
      h /= pool;
      w /= pool;
      if (h < 1 || w < 1) {
        throw UsageError("encoder: input " + std::to_string(patch_frames) + "x" +
                         std::to_string(n_mels) + " collapses to zero extent after block " +
                         std::to_string(b));
      }
    }
  }

  std::vector<LayerSpec> layers() const {
    std::vector<LayerSpec> out;
    std::size_t in = 1;
    for (std::size_t b = 0; b < channels.size(); ++b) {
      out.push_back(LayerSpec::conv2d("conv" + std::to_string(b), in, channels[b], kernel));
      out.push_back(LayerSpec::relu());
      out.push_back(LayerSpec::maxpool2d(pool));
      in = channels[b];
    }
    out.push_back(LayerSpec::global_avg_pool());
    out.push_back(LayerSpec::dense("embed", in, joint_dim));
    out.push_back(LayerSpec::l2norm());
    return out;
  }

  Shape input_shape() const { return {1, patch_frames, n_mels}; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

namespace detail {

template <class T>
void he_uniform(NdArray<T>& w, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : w.storage()) v = static_cast<T>(dist(rng));
}

}  // namespace detail

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases. Deterministic
/// in `seed`.
template <class T>
ParameterStore<T> init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ParameterStore<T> store;
  for (const auto& spec : config.layers()) {
    if (spec.kind == LayerKind::conv2d) {
      NdArray<T> w({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
      detail::he_uniform(w, spec.in_channels * spec.kernel * spec.kernel, rng);
      store.add(spec.weight_name(), std::move(w));
      store.add(spec.bias_name(), NdArray<T>({spec.out_channels}));
    } else if (spec.kind == LayerKind::dense) {
      NdArray<T> w({spec.out_features, spec.in_features});
      detail::he_uniform(w, spec.in_features, rng);
      store.add(spec.weight_name(), std::move(w));
      store.add(spec.bias_name(), NdArray<T>({spec.out_features}));
    }
  }
  return store;
}

template <class T>
NdArray<T> patch_tensor(const MelSpectrogram& patch, const EncoderConfig& config) {
  if (patch.frames() != config.patch_frames || patch.bands() != config.n_mels) {
    throw DataError("encoder: patch shape [" + std::to_string(patch.frames()) + "x" +
                    std::to_string(patch.bands()) + "] does not match configured input " +
                    shape_string(config.input_shape()));
  }
  return patch.values.template cast<T>().reshaped(config.input_shape());
}

template <class T>
SemanticPoint to_point(const NdArray<T>& v) {
  SemanticPoint p;
  p.values.assign(v.storage().begin(), v.storage().end());
  return p;
}

template <class T>
SemanticPoint encode_patch(const EncoderConfig& config, const ParameterStore<T>& params,
                           const MelSpectrogram& patch) {
  const auto layers = config.layers();
  auto out = sequential_forward<T>(layers, params, patch_tensor<T>(patch, config), nullptr);
  return to_point(out);
}

/// Renormalized mean of patch embeddings, summed in the given order.
inline SemanticPoint mean_embedding(const std::vector<SemanticPoint>& points) {
  if (points.empty()) throw DataError("mean_embedding: no patch embeddings");
  std::vector<double> mean(points.front().size(), 0.0);
  for (const auto& p : points) {
    if (p.size() != mean.size()) throw DataError("mean_embedding: dimension mismatch");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p.values[i];
  }
  for (double& m : mean) m /= static_cast<double>(points.size());
  return normalize_point(mean, "encode_track (patch embeddings cancel out)");
}

/// Embeds every patch of the track (see extract_patches) and returns the
/// renormalized mean.
template <class T>
SemanticPoint encode_track(const EncoderConfig& config, const ParameterStore<T>& params,
                           const MelSpectrogram& mel) {
  const auto patches = extract_patches(mel, config.patch_frames, config.patch_stride);
  std::vector<SemanticPoint> points;
  points.reserve(patches.size());
  for (const auto& patch : patches) points.push_back(encode_patch(config, params, patch));
  return mean_embedding(points);
}

}  // namespace zsl
