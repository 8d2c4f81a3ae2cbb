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

// Retrieval AUC, top-1 annotation accuracy, and the cross-corpus transfer
// protocol (embed a foreign test split with a frozen model, build the label
// index from the foreign candidate tags, score).

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "zsl/checkpoint.hpp"
#include "zsl/corpus.hpp"
#include "zsl/inference.hpp"
#include "zsl/pipeline.hpp"

namespace zsl {

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Rank-sum formulation with midranks; O(n log n).
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("roc_auc: scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("roc_auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("roc_auc: undefined for single-class input");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, doubled) midranks of the positives, kept integral.
  std::uint64_t rank2_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t doubled_midrank = (i + 1) + j;  // 2 * ((i+1) + j) / 2
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) rank2_sum += doubled_midrank;
    }
    i = j;
  }
  // U = R - P(P+1)/2, doubled: 2U = rank2_sum - P(P+1).
  const std::uint64_t twice_u = rank2_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

enum class AucAveraging { macro, global };

struct TagMetric {
  std::string tag;
  double value = 0.0;
  std::size_t positives = 0;
};

struct EvalReport {
  std::string protocol;   // "tag_retrieval_auc" or "genre_accuracy"
  std::string averaging;  // "macro", "global" or "overall"
  std::vector<TagMetric> per_tag;
  double aggregate = 0.0;
  std::size_t n_tracks = 0;
  std::vector<std::string> kept;
  std::vector<std::string> dropped;
  std::vector<std::string> skipped;  // tags without positives (or negatives)
  std::string checkpoint_id;
  bool zero_target_supervision = false;
  bool evaluated_on_training_tracks = false;
  std::vector<std::string> notes;
  std::string effective_config;
};

namespace eval_detail {

inline std::vector<std::unordered_set<std::string>> normalized_tag_sets(const std::vector<EmbeddedTrack>& tracks) {
  std::vector<std::unordered_set<std::string>> out;
  out.reserve(tracks.size());
  for (const auto& t : tracks) {
    std::unordered_set<std::string> s;
    for (const auto& tag : t.tags) s.insert(normalize_tag(tag));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace eval_detail

/// Per-tag AUC of ranking `tracks` by cosine to each index tag. Macro
/// averaging reports the unweighted mean over tags with both positives and
/// negatives; global pools every (track, tag) pair into one AUC.
inline EvalReport tag_retrieval_auc(const LabelIndex& index, const std::vector<EmbeddedTrack>& tracks,
                                    AucAveraging averaging = AucAveraging::macro) {
  if (tracks.empty()) throw DataError("tag_retrieval_auc: empty test split");
  EvalReport rep;
  rep.protocol = "tag_retrieval_auc";
  rep.averaging = averaging == AucAveraging::macro ? "macro" : "global";
  rep.kept = index.tags;
  rep.dropped = index.dropped;
  rep.n_tracks = tracks.size();
  const auto truth = eval_detail::normalized_tag_sets(tracks);
  std::vector<double> all_scores;
  std::vector<int> all_labels;
  double sum = 0.0;
  for (std::size_t t = 0; t < index.size(); ++t) {
    const auto key = normalize_tag(index.tags[t]);
    std::vector<double> scores(tracks.size());
    std::vector<int> labels(tracks.size());
    std::size_t positives = 0;
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      scores[i] = point_score(tracks[i].point, index.points[t]);
      labels[i] = truth[i].contains(key) ? 1 : 0;
      positives += static_cast<std::size_t>(labels[i]);
    }
    all_scores.insert(all_scores.end(), scores.begin(), scores.end());
    all_labels.insert(all_labels.end(), labels.begin(), labels.end());
    if (positives == 0 || positives == tracks.size()) {
      rep.skipped.push_back(index.tags[t]);
      continue;
    }
    const double auc = roc_auc(scores, labels);
    rep.per_tag.push_back({index.tags[t], auc, positives});
    sum += auc;
  }
  if (!rep.skipped.empty()) {
    rep.notes.push_back(std::to_string(rep.skipped.size()) +
                        " tag(s) skipped: no positives (or no negatives) in the test split");
  }
  if (averaging == AucAveraging::macro) {
    if (rep.per_tag.empty()) throw DataError("tag_retrieval_auc: no tag has both positives and negatives");
    rep.aggregate = sum / static_cast<double>(rep.per_tag.size());
  } else {
    rep.aggregate = roc_auc(all_scores, all_labels);
  }
  rep.notes.push_back("AUC computed per tag across tracks (retrieval direction), " + rep.averaging +
                      " averaged");
  return rep;
}

/// Top-1 nearest label per track; each track must carry exactly one of the
/// index tags. Per-tag values are per-genre accuracies; the aggregate is the
/// overall fraction correct.
inline EvalReport genre_accuracy(const LabelIndex& index, const std::vector<EmbeddedTrack>& tracks) {
  if (tracks.empty()) throw DataError("genre_accuracy: empty test split");
  EvalReport rep;
  rep.protocol = "genre_accuracy";
  rep.averaging = "overall";
  rep.kept = index.tags;
  rep.dropped = index.dropped;
  rep.n_tracks = tracks.size();
  std::vector<std::string> keys;
  for (const auto& t : index.tags) keys.push_back(normalize_tag(t));
  const auto truth = eval_detail::normalized_tag_sets(tracks);
  std::vector<std::size_t> count(index.size(), 0), correct(index.size(), 0);
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    std::size_t genre = index.size();
    std::size_t matches = 0;
    for (std::size_t t = 0; t < keys.size(); ++t) {
      if (truth[i].contains(keys[t])) {
        genre = t;
        ++matches;
      }
    }
    if (matches != 1) {
      throw DataError("genre_accuracy: track '" + tracks[i].id + "' has " + std::to_string(matches) +
                      " ground-truth genres among the candidates (expected exactly 1)");
    }
    const auto top = nearest_labels(tracks[i].point, index, 1).front();
    ++count[genre];
    if (top.position == genre) {
      ++correct[genre];
      ++total_correct;
    }
  }
  for (std::size_t t = 0; t < index.size(); ++t) {
    if (count[t] == 0) {
      rep.skipped.push_back(index.tags[t]);
      continue;
    }
    rep.per_tag.push_back({index.tags[t], static_cast<double>(correct[t]) / static_cast<double>(count[t]), count[t]});
  }
  rep.aggregate = static_cast<double>(total_correct) / static_cast<double>(tracks.size());
  return rep;
}

enum class Protocol { auc, accuracy };

/// Embeds `records` with a frozen checkpoint, builds the label index for
/// `candidates` through the checkpoint's projection and computes the chosen
/// metric. Records that were training tracks of the checkpoint are allowed
/// but flagged.
inline EvalReport evaluate_checkpoint(const ModelCheckpoint& ckpt, const std::vector<TrackRecord>& records,
                                      const std::vector<std::string>& candidates, const WordVectorTable& table,
                                      Protocol protocol, const std::string& base_dir = {},
                                      std::size_t threads = 1, AucAveraging averaging = AucAveraging::macro) {
  if (records.empty()) throw DataError("evaluate: test split is empty");
  const auto index = build_label_index(ckpt, candidates, table);
  const auto tracks = embed_records(ckpt, records, base_dir, threads);
  auto rep = protocol == Protocol::auc ? tag_retrieval_auc(index, tracks, averaging) : genre_accuracy(index, tracks);
  rep.checkpoint_id = checkpoint_identity(ckpt);
  std::unordered_set<std::string> trained(ckpt.train_track_ids.begin(), ckpt.train_track_ids.end());
  std::size_t overlap = 0;
  for (const auto& r : records) overlap += trained.contains(r.track_id) ? 1 : 0;
  rep.evaluated_on_training_tracks = overlap > 0;
  if (overlap > 0) {
    rep.notes.push_back("warning: " + std::to_string(overlap) + " evaluated track(s) were used to train this checkpoint");
  }
  rep.effective_config = ckpt.effective_config;
  return rep;
}

/// Cross-corpus protocol: the target's own candidate tags and test tracks
/// are fed to the frozen model with no adaptation of any kind.
inline EvalReport transfer_evaluate(const ModelCheckpoint& ckpt, const std::vector<TrackRecord>& target_test,
                                    const std::vector<std::string>& candidates, const WordVectorTable& table,
                                    Protocol protocol, const std::string& base_dir = {},
                                    std::size_t threads = 1, AucAveraging averaging = AucAveraging::macro) {
  if (target_test.empty()) throw DataError("transfer_evaluate: target test split is empty");
  auto rep = evaluate_checkpoint(ckpt, target_test, candidates, table, protocol, base_dir, threads, averaging);
  rep.zero_target_supervision = true;
  rep.notes.push_back("transfer: no target-corpus supervision; label index built from target candidates");
  return rep;
}

/// JSON Lines: one {"record":"tag",...} per tag, then one
/// {"record":"aggregate",...} carrying provenance.
inline void write_report_records(const EvalReport& rep, std::ostream& out) {
  for (const auto& m : rep.per_tag) {
    out << nlohmann::json{{"record", "tag"}, {"protocol", rep.protocol}, {"tag", m.tag},
                          {"value", m.value}, {"positives", m.positives}}
               .dump()
        << '\n';
  }
  out << nlohmann::json{{"record", "aggregate"},
                        {"protocol", rep.protocol},
                        {"averaging", rep.averaging},
                        {"value", rep.aggregate},
                        {"n_tracks", rep.n_tracks},
                        {"kept", rep.kept},
                        {"dropped", rep.dropped},
                        {"skipped", rep.skipped},
                        {"checkpoint", rep.checkpoint_id},
                        {"zero_target_supervision", rep.zero_target_supervision},
                        {"evaluated_on_training_tracks", rep.evaluated_on_training_tracks},
                        {"notes", rep.notes},
                        {"effective_config", rep.effective_config}}
             .dump()
      << '\n';
}

inline void print_report_table(const EvalReport& rep, std::ostream& out) {
  out << rep.protocol << " (" << rep.averaging << ", " << rep.n_tracks << " tracks)\n";
  std::size_t width = 9;
  for (const auto& m : rep.per_tag) width = std::max(width, m.tag.size());
  out << std::left << std::setw(static_cast<int>(width)) << "tag" << "  value     n\n";
  for (const auto& m : rep.per_tag) {
    out << std::left << std::setw(static_cast<int>(width)) << m.tag << "  " << std::fixed
        << std::setprecision(4) << m.value << "  " << m.positives << '\n';
  }
  out << std::left << std::setw(static_cast<int>(width)) << "AGGREGATE" << "  " << std::fixed
      << std::setprecision(4) << rep.aggregate << '\n';
  if (!rep.dropped.empty()) {
    out << "dropped (not in word table):";
    for (const auto& d : rep.dropped) out << ' ' << d;
    out << '\n';
  }
  for (const auto& n : rep.notes) out << "note: " << n << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace zsl
