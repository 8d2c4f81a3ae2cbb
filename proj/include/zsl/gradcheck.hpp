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

// Finite-difference verification of every layer kind and of the full
// encoder + projection + hinge objective, in double precision.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "zsl/audio_encoder.hpp"
#include "zsl/diff_core.hpp"
#include "zsl/trainer.hpp"

namespace zsl {

struct GradCheckEntry {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckResult result;
};

namespace gradcheck_detail {

inline NdArray<double> random_array(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  NdArray<double> a(shape);
  std::normal_distribution<double> g(0.0, scale);
  for (auto& v : a.storage()) v = g(rng);
  return a;
}

}  // namespace gradcheck_detail

/// Checks one layer: objective = sum_i r_i * layer(x)_i for fixed random r,
/// differentiated with respect to the input and the layer's parameters.
inline GradCheckResult check_layer_gradient(const LayerSpec& spec, const Shape& input_shape,
                                            std::uint64_t seed, double epsilon = 1e-5) {
  using gradcheck_detail::random_array;
  std::mt19937_64 rng(seed);
  ParameterStore<double> store;
  store.add("input", random_array(input_shape, rng));
  if (spec.kind == LayerKind::conv2d) {
    store.add(spec.weight_name(), random_array({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}, rng, 0.5));
    store.add(spec.bias_name(), random_array({spec.out_channels}, rng, 0.5));
  } else if (spec.kind == LayerKind::dense) {
    store.add(spec.weight_name(), random_array({spec.out_features, spec.in_features}, rng, 0.5));
    store.add(spec.bias_name(), random_array({spec.out_features}, rng, 0.5));
  }
  const auto weights = random_array(spec.output_shape(input_shape), rng);
  const GradFunction f = [&](ParameterStore<double>& p, bool want_grad) {
    auto [y, cache] = layer_forward(spec, p, p.value("input"));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights[i] * y[i];
    if (want_grad) {
      auto gin = layer_backward(spec, cache, weights, p);
      auto& gx = p.grad("input");
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gin[i];
    }
    return s;
  };
  return check_gradient(f, store, epsilon);
}

/// Random mini-problem for the full objective: tiny encoder over an 8x8
/// patch, joint dimension 8, word dimension 12.
struct CompositeProblem {
  JointModel<double> model;
  std::vector<TrainingTrack> corpus;
  NdArray<double> words;
  TripletBatch batch;
  double margin = 0.4;
};

inline CompositeProblem make_composite_problem(std::uint64_t seed, std::size_t joint_dim = 8,
                                               std::size_t word_dim = 12) {
  using gradcheck_detail::random_array;
  CompositeProblem prob;
  EncoderConfig enc;
  enc.patch_frames = 8;
  enc.n_mels = 8;
  enc.channels = {3, 4};
  enc.kernel = 3;
  enc.pool = 2;
  enc.joint_dim = joint_dim;
  enc.patch_stride = 8;
  prob.model = init_model<double>(enc, word_dim, seed);
  std::mt19937_64 rng(seed ^ 0xabcdef12345ULL);
  // Nonzero biases so their gradients are exercised.
  for (const auto& name : prob.model.params.names()) {
    if (name.ends_with(".bias")) {
      auto& b = prob.model.params.value(name);
      b = random_array(b.shape(), rng, 0.1);
    }
  }
  const std::size_t vocab = 6;
  prob.words = random_array({vocab, word_dim}, rng);
  for (std::size_t t = 0; t < 4; ++t) {
    TrainingTrack track;
    track.id = "t" + std::to_string(t);
    MelSpectrogram patch;
    patch.values = random_array({8, 8}, rng);
    track.patches.push_back(std::move(patch));
    track.tag_ids = {t % vocab, (t + 1) % vocab};
    prob.corpus.push_back(std::move(track));
  }
  prob.batch = sample_triplets(prob.corpus, vocab, 3, 2, rng);
  return prob;
}

inline GradCheckResult check_composite_gradient(std::uint64_t seed, double epsilon = 1e-5) {
  auto prob = make_composite_problem(seed);
  const GradFunction f = [&](ParameterStore<double>& p, bool want_grad) {
    return batch_objective<double>(prob.model, p, prob.batch, prob.corpus, prob.words, prob.margin, want_grad);
  };
  return check_gradient(f, prob.model.params, epsilon);
}

/// Every layer kind plus the composite objective, for seeds
/// first_seed .. first_seed + n_seeds - 1.
inline std::vector<GradCheckEntry> run_gradient_suite(std::uint64_t first_seed, std::size_t n_seeds,
                                                      double epsilon = 1e-5) {
  struct Case {
    std::string name;
    LayerSpec spec;
    Shape input;
  };
  const std::vector<Case> cases = {
      {"conv2d", LayerSpec::conv2d("c", 2, 3, 3), {2, 5, 6}},
      {"conv2d_stride2", LayerSpec::conv2d("c", 2, 3, 3, 2), {2, 7, 6}},
      {"conv2d_k5", LayerSpec::conv2d("c", 1, 2, 5), {1, 6, 7}},
      {"relu", LayerSpec::relu(), {3, 4, 5}},
      {"maxpool2d", LayerSpec::maxpool2d(2), {2, 4, 6}},
      {"global_avg_pool", LayerSpec::global_avg_pool(), {3, 4, 5}},
      {"dense", LayerSpec::dense("d", 7, 5), {7}},
      {"l2norm", LayerSpec::l2norm(), {6}},
  };
  std::vector<GradCheckEntry> out;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = first_seed + s;
    for (const auto& c : cases) out.push_back({c.name, seed, check_layer_gradient(c.spec, c.input, seed, epsilon)});
    out.push_back({"encoder+projection+hinge", seed, check_composite_gradient(seed, epsilon)});
  }
  return out;
}

}  // namespace zsl
