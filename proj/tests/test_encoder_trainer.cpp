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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "oracles.hpp"
#include "zsl/audio_encoder.hpp"
#include "zsl/corpus.hpp"
#include "zsl/gradcheck.hpp"
#include "zsl/pipeline.hpp"
#include "zsl/trainer.hpp"

namespace zsl {
namespace {

EncoderConfig small_encoder() {
  EncoderConfig e;
  e.patch_frames = 16;
  e.n_mels = 8;
  e.channels = {4, 6};
  e.joint_dim = 8;
  e.patch_stride = 8;
  return e;
}

MelSpectrogram random_mel(std::size_t frames, std::size_t bands, std::mt19937_64& rng) {
  MelSpectrogram m;
  m.values = NdArray<double>({frames, bands});
  std::normal_distribution<double> g(-2.0, 1.0);
  for (auto& v : m.values.storage()) v = g(rng);
  return m;
}

MelSpectrogram rows(const MelSpectrogram& mel, std::size_t first, std::size_t count) {
  MelSpectrogram out;
  out.values = NdArray<double>({count, mel.bands()});
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < mel.bands(); ++c) out.values.at(r, c) = mel.values.at(first + r, c);
  }
  return out;
}

TEST(Encoder, InitIsDeterministicInSeed) {
  const auto cfg = small_encoder();
  EXPECT_TRUE(init_encoder<float>(cfg, 3) == init_encoder<float>(cfg, 3));
  EXPECT_FALSE(init_encoder<float>(cfg, 3) == init_encoder<float>(cfg, 4));
}

TEST(Encoder, HeUniformBoundsAndZeroBiases) {
  EncoderConfig cfg;
  const auto p = init_encoder<double>(cfg, 11);
  // conv1 fan-in is 16 channels x 3 x 3.
  const double bound = std::sqrt(6.0 / 144.0);
  double maxabs = 0.0;
  for (double v : p.value("conv1.weight").storage()) maxabs = std::max(maxabs, std::abs(v));
  EXPECT_LE(maxabs, bound);
  EXPECT_GT(maxabs, 0.9 * bound);
  for (double v : p.value("conv1.bias").storage()) EXPECT_EQ(v, 0.0);
  const double dense_bound = std::sqrt(6.0 / 64.0);
  for (double v : p.value("embed.weight").storage()) EXPECT_LE(std::abs(v), dense_bound);
}

TEST(Encoder, ParameterShapes) {
  EncoderConfig cfg;
  const auto p = init_encoder<float>(cfg, 0);
  EXPECT_EQ(p.value("conv0.weight").shape(), (Shape{16, 1, 3, 3}));
  EXPECT_EQ(p.value("conv3.weight").shape(), (Shape{64, 64, 3, 3}));
  EXPECT_EQ(p.value("embed.weight").shape(), (Shape{256, 64}));
  EXPECT_EQ(p.value("embed.bias").shape(), (Shape{256}));
}

TEST(Encoder, CollapsingConfigIsRejected) {
  EncoderConfig cfg;
  cfg.patch_frames = 8;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = EncoderConfig{};
  cfg.kernel = 4;
  EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(Encoder, PatchEmbeddingIsUnitNorm) {
  const auto cfg = small_encoder();
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto params = init_encoder<double>(cfg, static_cast<std::uint64_t>(trial));
    const auto p = encode_patch(cfg, params, random_mel(16, 8, rng));
    ASSERT_EQ(p.size(), 8u);
    EXPECT_NEAR(p.norm(), 1.0, 1e-9);
  }
}

TEST(Encoder, WrongPatchShapeIsDataError) {
  const auto cfg = small_encoder();
  const auto params = init_encoder<double>(cfg, 0);
  std::mt19937_64 rng(2);
  EXPECT_THROW(encode_patch(cfg, params, random_mel(16, 9, rng)), DataError);
}

TEST(Encoder, ShortTrackEqualsTiledPatch) {
  const auto cfg = small_encoder();
  const auto params = init_encoder<double>(cfg, 5);
  std::mt19937_64 rng(3);
  const auto mel = random_mel(6, 8, rng);
  MelSpectrogram tiled;
  tiled.values = NdArray<double>({16, 8});
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 8; ++c) tiled.values.at(r, c) = mel.values.at(r % 6, c);
  }
  const auto a = encode_track(cfg, params, mel);
  const auto b = encode_patch(cfg, params, tiled);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
}

TEST(Encoder, TrackIsRenormalizedMeanOfPatches) {
  const auto cfg = small_encoder();
  const auto params = init_encoder<double>(cfg, 6);
  std::mt19937_64 rng(4);
  // 24 frames, stride 8: windows start at 0 and 8.
  const auto mel = random_mel(24, 8, rng);
  const auto p0 = encode_patch(cfg, params, rows(mel, 0, 16));
  const auto p1 = encode_patch(cfg, params, rows(mel, 8, 16));
  std::vector<double> sum(8);
  for (std::size_t i = 0; i < 8; ++i) sum[i] = p0.values[i] + p1.values[i];
  const auto expected = oracle::unit(sum);
  const auto got = encode_track(cfg, params, mel);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(got.values[i], expected[i], 1e-12);
}

TEST(Encoder, MeanEmbeddingIgnoresPatchOrder) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SemanticPoint> pts(5);
    for (auto& p : pts) {
      std::vector<double> v(7);
      for (auto& x : v) x = g(rng);
      p.values = oracle::unit(v);
    }
    const auto a = mean_embedding(pts);
    std::shuffle(pts.begin(), pts.end(), rng);
    const auto b = mean_embedding(pts);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
  }
}

std::vector<TrainingTrack> tiny_corpus(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::vector<TrainingTrack> corpus;
  std::uniform_int_distribution<std::size_t> tag(0, vocab - 1);
  for (std::size_t t = 0; t < n; ++t) {
    TrainingTrack tr;
    tr.id = "t" + std::to_string(t);
    const std::size_t np = 1 + t % 3;
    for (std::size_t p = 0; p < np; ++p) tr.patches.push_back(random_mel(16, 8, rng));
    std::set<std::size_t> ids;
    while (ids.size() < 1 + t % 3) ids.insert(tag(rng));
    tr.tag_ids.assign(ids.begin(), ids.end());
    corpus.push_back(std::move(tr));
  }
  return corpus;
}

TEST(Sampler, MembershipInvariantsOver10000Samples) {
  std::mt19937_64 rng(7);
  const auto corpus = tiny_corpus(rng, 12, 9);
  const auto batch = sample_triplets(corpus, 9, 10000, 4, rng);
  ASSERT_EQ(batch.size(), 10000u);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& track = corpus[batch.anchor_tracks[i]];
    ASSERT_LT(batch.anchor_patches[i], track.patches.size());
    const std::set<std::size_t> tags(track.tag_ids.begin(), track.tag_ids.end());
    ASSERT_TRUE(tags.contains(batch.positive_tag_ids[i]));
    const auto& negs = batch.negative_tag_ids[i];
    ASSERT_EQ(negs.size(), 4u);
    ASSERT_EQ(std::set<std::size_t>(negs.begin(), negs.end()).size(), 4u);
    for (auto n : negs) {
      ASSERT_LT(n, 9u);
      ASSERT_FALSE(tags.contains(n));
    }
  }
}

TEST(Sampler, FixedSeedGivesIdenticalBatches) {
  std::mt19937_64 rng(8);
  const auto corpus = tiny_corpus(rng, 10, 8);
  std::mt19937_64 a(42), b(42);
  const auto x = sample_triplets(corpus, 8, 64, 3, a);
  const auto y = sample_triplets(corpus, 8, 64, 3, b);
  EXPECT_EQ(x.anchor_tracks, y.anchor_tracks);
  EXPECT_EQ(x.anchor_patches, y.anchor_patches);
  EXPECT_EQ(x.positive_tag_ids, y.positive_tag_ids);
  EXPECT_EQ(x.negative_tag_ids, y.negative_tag_ids);
}

TEST(Sampler, PositiveIsUniformOverAnchorTags) {
  std::mt19937_64 rng(9);
  std::vector<TrainingTrack> corpus(1);
  corpus[0].id = "only";
  corpus[0].patches.push_back(random_mel(16, 8, rng));
  corpus[0].tag_ids = {0, 1};
  const auto batch = sample_triplets(corpus, 6, 10000, 2, rng);
  const auto a = std::count(batch.positive_tag_ids.begin(), batch.positive_tag_ids.end(), 0u);
  EXPECT_GE(a, 4800);
  EXPECT_LE(a, 5200);
}

TEST(Sampler, Errors) {
  std::mt19937_64 rng(10);
  std::vector<TrainingTrack> empty;
  EXPECT_THROW(sample_triplets(empty, 5, 4, 2, rng), DataError);
  auto corpus = tiny_corpus(rng, 3, 5);
  corpus[1].tag_ids = {0, 1, 2, 3, 4};
  EXPECT_THROW(sample_triplets(corpus, 5, 100, 1, rng), DataError);
  EXPECT_THROW(sample_triplets(corpus, 4, 4, 4, rng), UsageError);
}

using Vec = std::vector<double>;

double hinge(const Vec& a, const Vec& p, const std::vector<Vec>& n, double margin) {
  std::vector<std::span<const double>> negs(n.begin(), n.end());
  return triplet_hinge_loss<double>(a, p, negs, margin).loss;
}

TEST(Hinge, WorkedValues) {
  EXPECT_NEAR(hinge({1, 0}, {0, 1}, {{1, 0}}, 0.2), 1.2, 1e-15);
  EXPECT_EQ(hinge({1, 0}, {1, 0}, {{0, 1}}, 0.5), 0.0);
  EXPECT_EQ(hinge({1, 0}, {1, 0}, {{-1, 0}, {-1, 0}, {-1, 0}}, 0.4), 0.0);
}

TEST(Hinge, NonUnitInputIsRejected) {
  EXPECT_THROW(hinge({1, 0.1}, {1, 0}, {{0, 1}}, 0.4), NumericalError);
  EXPECT_THROW(hinge({1, 0}, {1, 0}, {{0, 1}}, 0.0), UsageError);
}

Vec random_unit(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> g;
  Vec v(d);
  for (auto& x : v) x = g(rng);
  return oracle::unit(v);
}

TEST(Hinge, NonnegativeAndZeroExactlyWhenMarginsHold) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> m(0.01, 1.5);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t d = 2 + trial % 5;
    const auto a = random_unit(rng, d);
    const auto p = random_unit(rng, d);
    std::vector<Vec> n;
    for (int j = 0; j < 1 + trial % 4; ++j) n.push_back(random_unit(rng, d));
    const double margin = m(rng);
    const double loss = hinge(a, p, n, margin);
    ASSERT_GE(loss, 0.0);
    bool satisfied = true;
    double expected = 0.0;
    for (const auto& nj : n) {
      const double term = margin - oracle::dot(a, p) + oracle::dot(a, nj);
      if (term > 0) satisfied = false;
      expected += std::max(0.0, term);
    }
    ASSERT_NEAR(loss, expected, 1e-12);
    ASSERT_EQ(loss == 0.0, satisfied);
  }
}

TEST(Hinge, InvariantUnderNegativePermutation) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_unit(rng, 6), p = random_unit(rng, 6);
    std::vector<Vec> n;
    for (int j = 0; j < 5; ++j) n.push_back(random_unit(rng, 6));
    const double l1 = hinge(a, p, n, 0.4);
    std::shuffle(n.begin(), n.end(), rng);
    EXPECT_NEAR(hinge(a, p, n, 0.4), l1, 1e-12);
  }
}

// Projection passes word vectors through unchanged and the encoder ignores
// its input, always emitting e1.
JointModel<double> constant_model(std::size_t dim) {
  EncoderConfig enc = small_encoder();
  enc.joint_dim = dim;
  auto model = init_model<double>(enc, dim, 1);
  model.params.value("embed.weight").fill(0.0);
  model.params.value("embed.bias")[0] = 1.0;
  auto& w = model.params.value("proj.weight");
  w.fill(0.0);
  for (std::size_t i = 0; i < dim; ++i) w.at(i, i) = 1.0;
  return model;
}

TEST(TrainStep, ZeroLossBatchOnlyAdvancesStepCounter) {
  auto model = constant_model(4);
  std::mt19937_64 rng(13);
  std::vector<TrainingTrack> corpus(1);
  corpus[0].id = "x";
  corpus[0].patches.push_back(random_mel(16, 8, rng));
  corpus[0].tag_ids = {0};
  // Tag 0 along e1, every other tag along -e1.
  NdArray<double> words({5, 4});
  words.at(0, 0) = 1.0;
  for (std::size_t i = 1; i < 5; ++i) words.at(i, 0) = -1.0;
  const auto batch = sample_triplets(corpus, 5, 8, 4, rng);
  const auto before = model.params;
  AdamState<double> state;
  TrainConfig cfg;
  const double loss = train_step(model, state, batch, corpus, words, cfg);
  EXPECT_EQ(loss, 0.0);
  EXPECT_EQ(state.step, 1u);
  for (const auto& name : before.names()) EXPECT_EQ(model.params.value(name), before.value(name)) << name;
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto params = init_encoder<double>(small_encoder(), 2);
  params.zero_grad();
  const auto before = params;
  AdamState<double> state;
  TrainConfig cfg;
  for (int i = 0; i < 3; ++i) adam_update(params, state, cfg);
  for (const auto& name : before.names()) EXPECT_EQ(params.value(name), before.value(name));
  EXPECT_EQ(state.step, 3u);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstTheGradient) {
  ParameterStore<double> p;
  p.add("x", NdArray<double>({3}, {1.0, 1.0, 1.0}));
  p.grad("x") = NdArray<double>({3}, {2.0, -0.5, 0.0});
  AdamState<double> state;
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  adam_update(p, state, cfg);
  // Bias-corrected first step: m_hat / sqrt(v_hat) = sign(g).
  EXPECT_NEAR(p.value("x")[0], 0.9, 1e-7);
  EXPECT_NEAR(p.value("x")[1], 1.1, 1e-7);
  EXPECT_EQ(p.value("x")[2], 1.0);
}

TEST(TrainStep, SmallStepDescendsOnSameBatch) {
  int descended = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    auto prob = make_composite_problem(1000 + trial);
    AdamState<double> state;
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    const double before = batch_objective<double>(prob.model, prob.model.params, prob.batch, prob.corpus,
                                                  prob.words, prob.margin, false);
    train_step(prob.model, state, prob.batch, prob.corpus, prob.words, cfg);
    const double after = batch_objective<double>(prob.model, prob.model.params, prob.batch, prob.corpus,
                                                 prob.words, prob.margin, false);
    if (after <= before) ++descended;
  }
  EXPECT_GE(descended, 95);
}

TEST(TrainStep, SingleTripletGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto prob = make_composite_problem(seed);
    std::mt19937_64 rng(seed);
    prob.batch = sample_triplets(prob.corpus, prob.words.dim(0), 1, 3, rng);
    const GradFunction f = [&](ParameterStore<double>& p, bool want) {
      return batch_objective<double>(prob.model, p, prob.batch, prob.corpus, prob.words, prob.margin, want);
    };
    EXPECT_LT(check_gradient(f, prob.model.params).max_rel_error, 1e-4);
  }
}

TEST(TrainStep, NonFiniteGradientNamesTheBlock) {
  auto prob = make_composite_problem(3);
  prob.model.params.value("conv0.weight")[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState<double> state;
  try {
    train_step(prob.model, state, prob.batch, prob.corpus, prob.words, TrainConfig{});
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("conv0.weight"), std::string::npos) << e.what();
  }
}

TEST(Fit, ZeroEpochsReturnsInitialization) {
  std::mt19937_64 rng(14);
  const auto corpus = tiny_corpus(rng, 8, 7);
  NdArray<float> words({7, 5});
  std::normal_distribution<float> g;
  for (auto& v : words.storage()) v = g(rng);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 21;
  const auto r = fit<float>(corpus, words, small_encoder(), cfg);
  EXPECT_EQ(r.epochs_completed, 0u);
  EXPECT_TRUE(r.epoch_losses.empty());
  EXPECT_TRUE(r.model.params == init_model<float>(small_encoder(), 5, 21).params);
}

TEST(Fit, SameSeedReproducesBits) {
  std::mt19937_64 rng(15);
  const auto corpus = tiny_corpus(rng, 20, 9);
  NdArray<float> words({9, 6});
  std::normal_distribution<float> g;
  for (auto& v : words.storage()) v = g(rng);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  const auto a = fit<float>(corpus, words, small_encoder(), cfg);
  const auto b = fit<float>(corpus, words, small_encoder(), cfg);
  ASSERT_EQ(a.epoch_losses.size(), 3u);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  EXPECT_TRUE(a.model.params == b.model.params);
  cfg.seed = 1;
  EXPECT_FALSE(fit<float>(corpus, words, small_encoder(), cfg).model.params == a.model.params);
}

TEST(Fit, ToyCorpusLossDecreases) {
  ToyCorpusConfig toy;
  toy.tracks_per_class = 6;
  const auto corpus = synth_toy_corpus(toy);
  DspConfig dsp;
  EncoderConfig enc;
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 8;
  const auto out = train_checkpoint(corpus.records, corpus.seen_tags, corpus.table, ResolutionPolicy::strict,
                                    dsp, enc, cfg, "", 1);
  ASSERT_EQ(out.epoch_losses.size(), 10u);
  EXPECT_LT(out.epoch_losses.back(), out.epoch_losses.front());
  // Unseen-class tracks carry no training tag and are skipped.
  EXPECT_EQ(out.data.tracks.size(), 60u);
  EXPECT_EQ(out.data.skipped_tracks.size(), 12u);
}

}  // namespace
}  // namespace zsl
