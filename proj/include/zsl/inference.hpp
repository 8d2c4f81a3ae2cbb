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

// Zero-shot prediction over arbitrary candidate label sets, and tag-query
// track retrieval. Scores are raw cosine similarities in [-1, 1]; ties are
// broken by candidate order (labels) or track id (tracks).

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "zsl/audio_encoder.hpp"
#include "zsl/checkpoint.hpp"
#include "zsl/dsp.hpp"
#include "zsl/semantic_point.hpp"
#include "zsl/word_space.hpp"

namespace zsl {

struct LabelIndex {
  std::vector<std::string> tags;
  std::vector<SemanticPoint> points;  // parallel to tags
  std::vector<std::string> dropped;

  std::size_t size() const { return tags.size(); }
};

struct ScoredLabel {
  std::string tag;
  double score = 0.0;
  std::size_t position = 0;  // index within the LabelIndex
};

struct ScoredTrack {
  std::string track_id;
  double score = 0.0;
};

struct AnnotationResult {
  std::vector<double> scores;           // parallel to the index tags
  std::vector<std::string> selected;    // score >= threshold, index order
  std::vector<ScoredLabel> ranking;     // descending score, ties by index order
};

/// Projects every resolvable candidate with the given projection.
inline LabelIndex build_label_index(const ProjectionParams& projection,
                                    const std::vector<std::string>& candidates,
                                    const WordVectorTable& table,
                                    ResolutionPolicy policy = ResolutionPolicy::strict) {
  const auto matrix = build_label_matrix(table, candidates, policy);
  if (matrix.kept.empty()) {
    throw DataError("build_label_index: none of the " + std::to_string(candidates.size()) +
                    " candidate tags resolves in the word table");
  }
  LabelIndex index;
  index.tags = matrix.kept;
  index.dropped = matrix.dropped;
  for (const auto& v : matrix.vectors) index.points.push_back(project_tag(v, projection));
  return index;
}

inline LabelIndex build_label_index(const ModelCheckpoint& ckpt,
                                    const std::vector<std::string>& candidates,
                                    const WordVectorTable& table) {
  if (table.dimension() != ckpt.word_dim) {
    throw DataError("build_label_index: word table has dimension " + std::to_string(table.dimension()) +
                    ", checkpoint expects " + std::to_string(ckpt.word_dim));
  }
  return build_label_index(ckpt.projection(), candidates, table, ckpt.policy());
}

/// Full descending ranking of `scores`, ties kept in index order.
inline std::vector<std::size_t> rank_descending(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline std::vector<double> score_labels(const SemanticPoint& point, const LabelIndex& index) {
  std::vector<double> scores;
  scores.reserve(index.size());
  for (const auto& p : index.points) scores.push_back(point_score(point, p));
  return scores;
}

inline std::vector<ScoredLabel> nearest_labels(const SemanticPoint& point, const LabelIndex& index,
                                               std::size_t k) {
  if (index.size() == 0) throw DataError("nearest_labels: empty label index");
  if (k < 1 || k > index.size()) {
    throw UsageError("nearest_labels: k must lie in [1, " + std::to_string(index.size()) + "]");
  }
  const auto scores = score_labels(point, index);
  const auto order = rank_descending(scores);
  std::vector<ScoredLabel> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back({index.tags[order[i]], scores[order[i]], order[i]});
  return out;
}

/// Thresholds and ranks precomputed scores (parallel to `tags`).
inline AnnotationResult annotate_scores(const std::vector<double>& scores,
                                        const std::vector<std::string>& tags, double threshold) {
  if (!(threshold >= -1.0 && threshold <= 1.0)) {
    throw UsageError("annotate: threshold must lie in [-1, 1] (cosine range)");
  }
  if (scores.size() != tags.size()) throw DataError("annotate: scores and tags differ in length");
  AnnotationResult r;
  r.scores = scores;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) r.selected.push_back(tags[i]);
  }
  for (auto i : rank_descending(scores)) r.ranking.push_back({tags[i], scores[i], i});
  return r;
}

inline AnnotationResult annotate_point(const SemanticPoint& point, const LabelIndex& index,
                                       double threshold) {
  return annotate_scores(score_labels(point, index), index.tags, threshold);
}

/// Resamples to the checkpoint's rate and computes its mel spectrogram.
inline MelSpectrogram audio_features(const PcmSignal& signal, const DspConfig& dsp,
                                     const FilterBank& bank) {
  return mel_spectrogram(resample(signal, dsp.target_sample_rate), dsp, bank);
}

inline SemanticPoint embed_audio(const ModelCheckpoint& ckpt, const PcmSignal& signal) {
  const auto bank = build_mel_filterbank(ckpt.dsp);
  return encode_track(ckpt.encoder, ckpt.params, audio_features(signal, ckpt.dsp, bank));
}

inline AnnotationResult annotate(const ModelCheckpoint& ckpt, const PcmSignal& signal,
                                 const LabelIndex& index, double threshold) {
  if (!(threshold >= -1.0 && threshold <= 1.0)) {
    throw UsageError("annotate: threshold must lie in [-1, 1] (cosine range)");
  }
  return annotate_point(embed_audio(ckpt, signal), index, threshold);
}

struct EmbeddedTrack {
  std::string id;
  SemanticPoint point;
  std::vector<std::string> tags;
};

/// Ranks tracks by cosine to `query`; ties by ascending track id.
inline std::vector<ScoredTrack> rank_tracks(const SemanticPoint& query,
                                            const std::vector<EmbeddedTrack>& tracks, std::size_t k) {
  if (tracks.empty()) throw DataError("retrieve_tracks: no tracks to rank");
  if (k < 1 || k > tracks.size()) {
    throw UsageError("retrieve_tracks: k must lie in [1, " + std::to_string(tracks.size()) + "]");
  }
  std::vector<ScoredTrack> all;
  all.reserve(tracks.size());
  for (const auto& t : tracks) all.push_back({t.id, point_score(query, t.point)});
  std::sort(all.begin(), all.end(), [](const ScoredTrack& a, const ScoredTrack& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.track_id < b.track_id;
  });
  all.resize(k);
  return all;
}

inline std::vector<ScoredTrack> retrieve_tracks(const ProjectionParams& projection,
                                                const std::string& query_tag,
                                                const WordVectorTable& table, ResolutionPolicy policy,
                                                const std::vector<EmbeddedTrack>& tracks, std::size_t k) {
  const auto res = resolve_tag(table, query_tag, policy);
  if (!res.vector) throw DataError("retrieve_tracks: query tag '" + query_tag + "' does not resolve");
  return rank_tracks(project_tag(*res.vector, projection), tracks, k);
}

inline std::vector<ScoredTrack> retrieve_tracks(const ModelCheckpoint& ckpt, const std::string& query_tag,
                                                const WordVectorTable& table,
                                                const std::vector<EmbeddedTrack>& tracks, std::size_t k) {
  return retrieve_tracks(ckpt.projection(), query_tag, table, ckpt.policy(), tracks, k);
}

}  // namespace zsl
