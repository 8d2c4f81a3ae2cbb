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

// Glue between manifests, the DSP front end, training and embedding.

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "zsl/checkpoint.hpp"
#include "zsl/corpus.hpp"
#include "zsl/inference.hpp"
#include "zsl/trainer.hpp"
#include "zsl/word_space.hpp"

namespace zsl {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; results must be written to per-index slots. The
/// first exception thrown by any worker is rethrown.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Mel spectrograms for every record, in record order.
inline std::vector<MelSpectrogram> compute_features(const std::vector<TrackRecord>& records,
                                                    const DspConfig& dsp, const std::string& base_dir,
                                                    std::size_t threads = 1) {
  const auto bank = build_mel_filterbank(dsp);
  std::vector<MelSpectrogram> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    try {
      out[i] = audio_features(load_track_audio(records[i], base_dir), dsp, bank);
    } catch (const DataError& e) {
      throw DataError("track '" + records[i].track_id + "': " + e.what());
    }
  });
  return out;
}

inline std::vector<EmbeddedTrack> embed_features(const ModelCheckpoint& ckpt,
                                                 const std::vector<TrackRecord>& records,
                                                 const std::vector<MelSpectrogram>& features,
                                                 std::size_t threads = 1) {
  std::vector<EmbeddedTrack> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    out[i] = {records[i].track_id, encode_track(ckpt.encoder, ckpt.params, features[i]), records[i].tags};
  });
  return out;
}

/// Embeds every record with a frozen checkpoint. Output order = record order
/// regardless of `threads`.
inline std::vector<EmbeddedTrack> embed_records(const ModelCheckpoint& ckpt,
                                                const std::vector<TrackRecord>& records,
                                                const std::string& base_dir, std::size_t threads = 1) {
  return embed_features(ckpt, records, compute_features(records, ckpt.dsp, base_dir, threads), threads);
}

struct TrainingData {
  std::vector<TrainingTrack> tracks;
  std::vector<std::string> vocab;       // resolvable training tags, input order
  std::vector<std::string> dropped_tags;
  std::vector<std::string> skipped_tracks;  // no resolvable tag
  NdArray<float> words;                 // [vocab x word_dim]
};

/// Resolves the training vocabulary and cuts every track's spectrogram into
/// encoder patches. Tracks without any resolvable vocabulary tag are skipped
/// and listed.
inline TrainingData build_training_data(const std::vector<TrackRecord>& records,
                                        const std::vector<MelSpectrogram>& features,
                                        const std::vector<std::string>& vocab_tags,
                                        const WordVectorTable& table, ResolutionPolicy policy,
                                        const EncoderConfig& encoder) {
  TrainingData data;
  const auto matrix = build_label_matrix(table, vocab_tags, policy);
  data.vocab = matrix.kept;
  data.dropped_tags = matrix.dropped;
  if (data.vocab.empty()) throw DataError("training vocabulary: no tag resolves in the word table");
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < data.vocab.size(); ++i) ids.emplace(normalize_tag(data.vocab[i]), i);
  data.words = NdArray<float>({data.vocab.size(), table.dimension()});
  for (std::size_t i = 0; i < data.vocab.size(); ++i) {
    for (std::size_t k = 0; k < table.dimension(); ++k) {
      data.words.at(i, k) = static_cast<float>(matrix.vectors[i][k]);
    }
  }
  for (std::size_t r = 0; r < records.size(); ++r) {
    TrainingTrack t;
    t.id = records[r].track_id;
    for (const auto& tag : records[r].tags) {
      auto it = ids.find(normalize_tag(tag));
      if (it != ids.end() && std::find(t.tag_ids.begin(), t.tag_ids.end(), it->second) == t.tag_ids.end()) {
        t.tag_ids.push_back(it->second);
      }
    }
    if (t.tag_ids.empty()) {
      data.skipped_tracks.push_back(t.id);
      continue;
    }
    t.patches = extract_patches(features[r], encoder.patch_frames, encoder.patch_stride);
    data.tracks.push_back(std::move(t));
  }
  if (data.tracks.empty()) throw DataError("training: no track carries a resolvable vocabulary tag");
  return data;
}

struct TrainOutcome {
  ModelCheckpoint checkpoint;
  std::vector<double> epoch_losses;
  TrainingData data;
};

/// Fits a model on `records` (all of them; filter splits beforehand) and
/// packages it as a checkpoint.
inline TrainOutcome train_checkpoint(const std::vector<TrackRecord>& records,
                                     const std::vector<std::string>& vocab_tags,
                                     const WordVectorTable& table, ResolutionPolicy policy,
                                     const DspConfig& dsp, EncoderConfig encoder,
                                     const TrainConfig& config, const std::string& base_dir,
                                     std::size_t threads = 1, const EpochCallback& on_epoch = {}) {
  dsp.validate();
  encoder.n_mels = dsp.n_mels;
  encoder.validate();
  config.validate();
  const auto features = compute_features(records, dsp, base_dir, threads);
  TrainOutcome out;
  out.data = build_training_data(records, features, vocab_tags, table, policy, encoder);
  auto result = fit<float>(out.data.tracks, out.data.words, encoder, config, on_epoch);
  out.epoch_losses = result.epoch_losses;
  auto& ckpt = out.checkpoint;
  ckpt.encoder = encoder;
  ckpt.dsp = dsp;
  ckpt.word_dim = table.dimension();
  ckpt.params = std::move(result.model.params);
  ckpt.tag_vocab = out.data.vocab;
  ckpt.seed = config.seed;
  ckpt.epochs_completed = result.epochs_completed;
  ckpt.resolution_policy = policy == ResolutionPolicy::averaged ? "averaged" : "strict";
  for (const auto& t : out.data.tracks) ckpt.train_track_ids.push_back(t.id);
  return out;
}

}  // namespace zsl
