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

// Joint training of the audio encoder and the tag projection with a
// sum-over-negatives cosine hinge:
//
//   loss(a, p, {n_j}) = sum_j max(0, margin - cos(a, p) + cos(a, n_j))
//
// The word table itself is frozen; only the projection ("proj.*") and the
// encoder parameters receive updates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "zsl/audio_encoder.hpp"
#include "zsl/diff_core.hpp"
#include "zsl/dsp.hpp"
#include "zsl/error.hpp"

namespace zsl {

struct TrainConfig {
  double margin = 0.4;
  std::size_t negatives = 4;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  bool deterministic = true;

  void validate() const {
    if (!(margin > 0.0 && margin < 2.0)) throw UsageError("train: margin must lie in (0, 2)");
    if (negatives < 1) throw UsageError("train: negatives must be at least 1");
    if (batch_size < 1) throw UsageError("train: batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw UsageError("train: learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw UsageError("train: beta1 and beta2 must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw UsageError("train: adam_epsilon must be positive");
  }
};

/// One training track: its patches and the vocabulary indices of its tags.
struct TrainingTrack {
  std::string id;
  std::vector<MelSpectrogram> patches;
  std::vector<std::size_t> tag_ids;
};

struct TripletBatch {
  std::vector<std::size_t> anchor_tracks;
  std::vector<std::size_t> anchor_patches;
  std::vector<std::size_t> positive_tag_ids;
  std::vector<std::vector<std::size_t>> negative_tag_ids;

  std::size_t size() const { return anchor_tracks.size(); }

  const MelSpectrogram& anchor(std::size_t i, std::span<const TrainingTrack> corpus) const {
    return corpus[anchor_tracks[i]].patches[anchor_patches[i]];
  }
};

/// Anchor tracks uniform over the corpus, one uniformly chosen patch each,
/// a positive uniform over the anchor's tags, and `negatives` distinct tags
/// drawn uniformly without replacement from the tags the anchor lacks.
inline TripletBatch sample_triplets(std::span<const TrainingTrack> corpus, std::size_t vocab_size,
                                    std::size_t batch_size, std::size_t negatives,
                                    std::mt19937_64& rng) {
  if (corpus.empty()) throw DataError("sample_triplets: empty corpus");
  if (vocab_size <= negatives) {
    throw UsageError("sample_triplets: vocabulary of " + std::to_string(vocab_size) +
                     " tags cannot supply " + std::to_string(negatives) + " negatives");
  }
  TripletBatch batch;
  batch.anchor_tracks.reserve(batch_size);
  std::vector<char> attached(vocab_size, 0);
  std::vector<std::size_t> pool;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t t =
        std::uniform_int_distribution<std::size_t>(0, corpus.size() - 1)(rng);
    const auto& track = corpus[t];
    if (track.tag_ids.empty() || track.patches.empty()) {
      throw DataError("sample_triplets: track '" + track.id + "' has no tags or no audio");
    }
    const std::size_t patch =
        std::uniform_int_distribution<std::size_t>(0, track.patches.size() - 1)(rng);
    const std::size_t pos = track.tag_ids[std::uniform_int_distribution<std::size_t>(
        0, track.tag_ids.size() - 1)(rng)];
    std::fill(attached.begin(), attached.end(), 0);
    for (auto id : track.tag_ids) {
      if (id >= vocab_size) throw DataError("sample_triplets: tag id out of vocabulary range");
      attached[id] = 1;
    }
    pool.clear();
    for (std::size_t v = 0; v < vocab_size; ++v) {
      if (!attached[v]) pool.push_back(v);
    }
    if (pool.size() < negatives) {
      throw DataError("sample_triplets: track '" + track.id + "' leaves only " +
                      std::to_string(pool.size()) + " candidate negatives");
    }
    std::vector<std::size_t> negs(negatives);
    for (std::size_t k = 0; k < negatives; ++k) {
      const std::size_t j =
          std::uniform_int_distribution<std::size_t>(k, pool.size() - 1)(rng);
      std::swap(pool[k], pool[j]);
      negs[k] = pool[k];
    }
    batch.anchor_tracks.push_back(t);
    batch.anchor_patches.push_back(patch);
    batch.positive_tag_ids.push_back(pos);
    batch.negative_tag_ids.push_back(std::move(negs));
  }
  return batch;
}

template <class T>
struct HingeResult {
  T loss{};
  std::vector<T> grad_anchor;
  std::vector<T> grad_positive;
  std::vector<std::vector<T>> grad_negatives;
};

/// Sum-over-negatives cosine hinge. Inputs must be unit norm (to 1e-4); a
/// term exactly at its kink contributes zero gradient.
template <class T>
HingeResult<T> triplet_hinge_loss(std::span<const T> anchor, std::span<const T> positive,
                                  const std::vector<std::span<const T>>& negatives, T margin) {
  if (!(margin > T{0})) throw UsageError("triplet_hinge_loss: margin must be positive");
  auto check_unit = [](std::span<const T> v, const char* what) {
    double s = 0.0;
    for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
    if (!(std::abs(std::sqrt(s) - 1.0) <= 1e-4)) {
      throw NumericalError(std::string("triplet_hinge_loss: ") + what + " is not unit norm (norm " +
                           std::to_string(std::sqrt(s)) + ")");
    }
  };
  check_unit(anchor, "anchor");
  check_unit(positive, "positive");
  for (const auto& n : negatives) check_unit(n, "negative");

  HingeResult<T> r;
  r.grad_anchor.assign(anchor.size(), T{0});
  r.grad_positive.assign(positive.size(), T{0});
  r.grad_negatives.assign(negatives.size(), std::vector<T>(anchor.size(), T{0}));
  const auto ap = cosine_similarity<T>(anchor, positive);
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    const auto an = cosine_similarity<T>(anchor, negatives[j]);
    const T term = margin - ap.value + an.value;
    if (term > T{0}) {
      r.loss += term;
      for (std::size_t i = 0; i < anchor.size(); ++i) {
        r.grad_anchor[i] += an.grad_a[i] - ap.grad_a[i];
        r.grad_positive[i] -= ap.grad_b[i];
        r.grad_negatives[j][i] = an.grad_b[i];
      }
    }
  }
  return r;
}

/// Encoder and projection parameters in one store. Projection parameters
/// are "proj.weight" [joint_dim x word_dim] and "proj.bias" [joint_dim].
template <class T>
struct JointModel {
  EncoderConfig encoder;
  std::size_t word_dim = 0;
  ParameterStore<T> params;

  std::vector<LayerSpec> projection_layers() const {
    return {LayerSpec::dense("proj", word_dim, encoder.joint_dim), LayerSpec::l2norm()};
  }
};

template <class T>
JointModel<T> init_model(const EncoderConfig& encoder, std::size_t word_dim, std::uint64_t seed) {
  if (word_dim == 0) throw UsageError("init_model: word_dim must be positive");
  JointModel<T> model;
  model.encoder = encoder;
  model.word_dim = word_dim;
  model.params = init_encoder<T>(encoder, seed);
  std::mt19937_64 rng(seed ^ 0x5bd1e9955bd1e995ULL);
  NdArray<T> w({encoder.joint_dim, word_dim});
  detail::he_uniform(w, word_dim, rng);
  model.params.add("proj.weight", std::move(w));
  model.params.add("proj.bias", NdArray<T>({encoder.joint_dim}));
  return model;
}

/// Mean triplet loss of `batch`. With `want_grad`, gradients of that mean
/// are added into `params`' accumulators. `words` is the frozen
/// [vocab x word_dim] table of training-tag vectors.
template <class T>
T batch_objective(const JointModel<T>& shape, ParameterStore<T>& params, const TripletBatch& batch,
                  std::span<const TrainingTrack> corpus, const NdArray<T>& words, T margin,
                  bool want_grad) {
  if (batch.size() == 0) throw DataError("batch_objective: empty batch");
  if (words.rank() != 2 || words.dim(1) != shape.word_dim) {
    throw DataError("batch_objective: word matrix shape " + shape_string(words.shape()) +
                    " does not match word_dim " + std::to_string(shape.word_dim));
  }
  const auto enc_layers = shape.encoder.layers();
  const auto proj_layers = shape.projection_layers();
  const std::size_t D = shape.word_dim;

  // Project each distinct tag of the batch once, in ascending tag order.
  std::set<std::size_t> used;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    used.insert(batch.positive_tag_ids[i]);
    used.insert(batch.negative_tag_ids[i].begin(), batch.negative_tag_ids[i].end());
  }
  struct TagState {
    NdArray<T> point;
    std::vector<LayerCache<T>> caches;
    NdArray<T> grad;
  };
  std::map<std::size_t, TagState> tags;
  for (auto id : used) {
    if (id >= words.dim(0)) throw DataError("batch_objective: tag id out of range");
    NdArray<T> v({D}, std::vector<T>(words.data() + id * D, words.data() + (id + 1) * D));
    TagState st;
    st.point = sequential_forward<T>(proj_layers, params, std::move(v), want_grad ? &st.caches : nullptr);
    st.grad = NdArray<T>(st.point.shape());
    tags.emplace(id, std::move(st));
  }

  const T scale = T{1} / static_cast<T>(batch.size());
  T total{0};
  std::vector<LayerCache<T>> caches;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto a = sequential_forward<T>(enc_layers, params,
                                   patch_tensor<T>(batch.anchor(i, corpus), shape.encoder),
                                   want_grad ? &caches : nullptr);
    const auto& pos = tags.at(batch.positive_tag_ids[i]);
    std::vector<std::span<const T>> negs;
    for (auto id : batch.negative_tag_ids[i]) negs.push_back(tags.at(id).point.span());
    const auto h = triplet_hinge_loss<T>(a.span(), pos.point.span(), negs, margin);
    total += h.loss;
    if (!want_grad) continue;
    NdArray<T> ga(a.shape());
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] = h.grad_anchor[k] * scale;
    sequential_backward<T>(enc_layers, caches, std::move(ga), params);
    auto& gp = tags.at(batch.positive_tag_ids[i]).grad;
    for (std::size_t k = 0; k < gp.size(); ++k) gp[k] += h.grad_positive[k] * scale;
    for (std::size_t j = 0; j < negs.size(); ++j) {
      auto& gn = tags.at(batch.negative_tag_ids[i][j]).grad;
      for (std::size_t k = 0; k < gn.size(); ++k) gn[k] += h.grad_negatives[j][k] * scale;
    }
  }
  if (want_grad) {
    for (auto& [id, st] : tags) sequential_backward<T>(proj_layers, st.caches, st.grad, params);
  }
  return total * scale;
}

template <class T>
struct AdamState {
  std::map<std::string, NdArray<T>> m;
  std::map<std::string, NdArray<T>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam step over every parameter in `params`, using the
/// gradients currently accumulated there.
template <class T>
void adam_update(ParameterStore<T>& params, AdamState<T>& state, const TrainConfig& config) {
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T lr = static_cast<T>(config.learning_rate), eps = static_cast<T>(config.adam_epsilon);
  for (const auto& name : params.names()) {
    auto& p = params.value(name);
    const auto& g = params.grad(name);
    auto& m = state.m.try_emplace(name, p.shape()).first->second;
    auto& v = state.v.try_emplace(name, p.shape()).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      const T mhat = m[i] / static_cast<T>(c1);
      const T vhat = v[i] / static_cast<T>(c2);
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

/// Forward both branches, backward, Adam. Returns the mean batch loss.
/// Throws NumericalError, naming the offending parameter block, when the
/// loss or any gradient is not finite; parameters are left untouched then.
template <class T>
T train_step(JointModel<T>& model, AdamState<T>& state, const TripletBatch& batch,
             std::span<const TrainingTrack> corpus, const NdArray<T>& words,
             const TrainConfig& config) {
  for (const auto& name : model.params.names()) {
    if (!model.params.value(name).all_finite()) {
      throw NumericalError("train_step: non-finite value in parameter block '" + name + "'");
    }
  }
  model.params.zero_grad();
  const T loss = batch_objective<T>(model, model.params, batch, corpus, words,
                                    static_cast<T>(config.margin), true);
  for (const auto& name : model.params.names()) {
    if (!model.params.grad(name).all_finite()) {
      throw NumericalError("train_step: non-finite gradient in parameter block '" + name + "'");
    }
  }
  if (!std::isfinite(static_cast<double>(loss))) {
    throw NumericalError("train_step: non-finite loss");
  }
  adam_update(model.params, state, config);
  return loss;
}

template <class T>
struct FitResult {
  JointModel<T> model;
  std::vector<double> epoch_losses;
  std::size_t epochs_completed = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// epochs x ceil(|corpus| / batch_size) steps. Every random draw comes from
/// generators seeded by config.seed and the batch order is fixed, so a
/// given seed reproduces the trajectory bit for bit.
template <class T>
FitResult<T> fit(std::span<const TrainingTrack> corpus, const NdArray<T>& words,
                 const EncoderConfig& encoder, const TrainConfig& config,
                 const EpochCallback& on_epoch = {}) {
  config.validate();
  encoder.validate();
  if (corpus.empty()) throw DataError("fit: empty training corpus");
  if (words.rank() != 2 || words.dim(0) == 0) throw DataError("fit: empty word matrix");
  FitResult<T> result{init_model<T>(encoder, words.dim(1), config.seed), {}, 0};
  AdamState<T> state;
  std::mt19937_64 sampler(config.seed + 0x9e3779b97f4a7c15ULL);
  const std::size_t steps = (corpus.size() + config.batch_size - 1) / config.batch_size;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const auto batch =
          sample_triplets(corpus, words.dim(0), config.batch_size, config.negatives, sampler);
      sum += static_cast<double>(train_step(result.model, state, batch, corpus, words, config));
    }
    result.epoch_losses.push_back(sum / static_cast<double>(steps));
    result.epochs_completed = epoch + 1;
    if (on_epoch) on_epoch(epoch, result.epoch_losses.back());
  }
  return result;
}

}  // namespace zsl
