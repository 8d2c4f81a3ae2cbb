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

// Track manifests, reproducible splits, and the synthetic toy corpus.
//
// Manifest line:  track_id <TAB> audio <TAB> tag,tag,... [<TAB> split]
// where audio is a WAV path (relative paths resolve against the manifest's
// directory) or an inline "synth:" spec. Lines starting with '#' are
// comments.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "zsl/dsp.hpp"
#include "zsl/error.hpp"
#include "zsl/wav.hpp"
#include "zsl/word_space.hpp"

namespace zsl {

enum class Split { train, valid, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  return std::nullopt;
}

/// Parameters that regenerate one synthetic track exactly.
struct SynthSpec {
  double fundamental = 0.0;
  double phase = 0.0;
  std::uint64_t noise_seed = 0;
  double duration = 3.0;
  int sample_rate = 22050;
  double noise_sigma = 0.01;
  std::vector<double> amplitudes{1.0, 0.5, 0.25, 0.125};

  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

namespace corpus_detail {

inline std::string fmt_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError("cannot parse " + what + ": '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.emplace_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace corpus_detail

inline std::string to_string(const SynthSpec& s) {
  using corpus_detail::fmt_double;
  std::string amps;
  for (std::size_t i = 0; i < s.amplitudes.size(); ++i) {
    if (i) amps += '/';
    amps += fmt_double(s.amplitudes[i]);
  }
  return "synth:f0=" + fmt_double(s.fundamental) + ";phase=" + fmt_double(s.phase) +
         ";seed=" + std::to_string(s.noise_seed) + ";dur=" + fmt_double(s.duration) +
         ";sr=" + std::to_string(s.sample_rate) + ";sigma=" + fmt_double(s.noise_sigma) +
         ";amps=" + amps;
}

inline SynthSpec parse_synth_spec(std::string_view text) {
  using namespace corpus_detail;
  if (text.substr(0, 6) != "synth:") throw DataError("synth spec must start with 'synth:'");
  SynthSpec s;
  std::set<std::string> seen;
  for (const auto& kv : split_on(text.substr(6), ';')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw DataError("synth spec: expected key=value, got '" + kv + "'");
    const auto key = kv.substr(0, eq);
    const std::string_view val = std::string_view(kv).substr(eq + 1);
    seen.insert(key);
    if (key == "f0") s.fundamental = parse_double(val, "f0");
    else if (key == "phase") s.phase = parse_double(val, "phase");
    else if (key == "seed") s.noise_seed = std::stoull(std::string(val));
    else if (key == "dur") s.duration = parse_double(val, "dur");
    else if (key == "sr") s.sample_rate = std::stoi(std::string(val));
    else if (key == "sigma") s.noise_sigma = parse_double(val, "sigma");
    else if (key == "amps") {
      s.amplitudes.clear();
      for (const auto& a : split_on(val, '/')) s.amplitudes.push_back(parse_double(a, "amps"));
    } else {
      throw DataError("synth spec: unknown key '" + key + "'");
    }
  }
  if (!seen.contains("f0") || s.fundamental <= 0.0 || s.sample_rate <= 0 || s.duration <= 0.0) {
    throw DataError("synth spec: f0, sr and dur must be positive");
  }
  return s;
}

/// sum_k a_k sin(2 pi k f0 t + phase) + N(0, sigma^2) noise.
inline PcmSignal render_synth(const SynthSpec& spec) {
  PcmSignal sig;
  sig.sample_rate = spec.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  sig.samples.resize(n);
  std::mt19937_64 rng(spec.noise_seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.sample_rate;
    double v = 0.0;
    for (std::size_t k = 0; k < spec.amplitudes.size(); ++k) {
      v += spec.amplitudes[k] *
           std::sin(2.0 * std::numbers::pi * static_cast<double>(k + 1) * spec.fundamental * t + spec.phase);
    }
    sig.samples[i] = v + (spec.noise_sigma > 0.0 ? noise(rng) : 0.0);
  }
  return sig;
}

struct TrackRecord {
  std::string track_id;
  std::string audio_path;
  std::optional<SynthSpec> synth;
  std::vector<std::string> tags;
  std::optional<Split> split;

  std::string audio_field() const { return synth ? to_string(*synth) : audio_path; }

  friend bool operator==(const TrackRecord&, const TrackRecord&) = default;
};

/// Parses manifest lines. Tags are trimmed and deduplicated (first
/// occurrence wins). Errors carry the 1-based line number.
inline std::vector<TrackRecord> load_manifest(std::istream& in) {
  using namespace corpus_detail;
  std::vector<TrackRecord> out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    const auto where = "manifest line " + std::to_string(line_no) + ": ";
    const auto fields = split_on(line, '\t');
    if (fields.size() < 3 || fields.size() > 4) {
      throw DataError(where + "malformed record (expected 3 or 4 TAB-separated fields, got " +
                      std::to_string(fields.size()) + ")");
    }
    TrackRecord rec;
    rec.track_id = trim(fields[0]);
    if (rec.track_id.empty()) throw DataError(where + "malformed record (empty track id)");
    const auto audio = trim(fields[1]);
    if (audio.empty()) throw DataError(where + "malformed record (empty audio field)");
    if (audio.rfind("synth:", 0) == 0) {
      try {
        rec.synth = parse_synth_spec(audio);
      } catch (const std::exception& e) {
        throw DataError(where + e.what());
      }
    } else {
      rec.audio_path = audio;
    }
    for (const auto& t : split_on(fields[2], ',')) {
      auto tag = trim(t);
      if (tag.empty()) continue;
      if (std::find(rec.tags.begin(), rec.tags.end(), tag) == rec.tags.end()) rec.tags.push_back(tag);
    }
    if (rec.tags.empty()) throw DataError(where + "malformed record (empty tag list)");
    if (fields.size() == 4 && !trim(fields[3]).empty()) {
      rec.split = parse_split(trim(fields[3]));
      if (!rec.split) throw DataError(where + "malformed record (unknown split '" + fields[3] + "')");
    }
    if (!ids.insert(rec.track_id).second) {
      throw DataError(where + "duplicate track id '" + rec.track_id + "'");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_manifest(std::ostream& out, const std::vector<TrackRecord>& records,
                           const std::string& header_comment = {}) {
  if (!header_comment.empty()) {
    std::istringstream lines(header_comment);
    std::string l;
    while (std::getline(lines, l)) out << "# " << l << '\n';
  }
  for (const auto& r : records) {
    out << r.track_id << '\t' << r.audio_field() << '\t';
    for (std::size_t i = 0; i < r.tags.size(); ++i) out << (i ? "," : "") << r.tags[i];
    if (r.split) out << '\t' << to_string(*r.split);
    out << '\n';
  }
}

struct SplitSpec {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
  bool stratify = false;

  void validate() const {
    if (train < 0.0 || valid < 0.0 || test < 0.0) throw UsageError("split: fractions must be nonnegative");
    if (std::abs(train + valid + test - 1.0) > 1e-9) throw UsageError("split: fractions must sum to 1");
  }
};

namespace corpus_detail {

/// Bucket sizes for n items; nonzero-fraction buckets get at least one item
/// when `min_one` is set and n allows it.
inline std::array<std::size_t, 3> bucket_sizes(std::size_t n, const SplitSpec& s, bool min_one) {
  const double fr[3] = {s.train, s.valid, s.test};
  std::array<std::size_t, 3> c{};
  c[0] = static_cast<std::size_t>(std::llround(n * fr[0]));
  c[1] = static_cast<std::size_t>(std::llround(n * fr[1]));
  c[0] = std::min(c[0], n);
  c[1] = std::min(c[1], n - c[0]);
  c[2] = n - c[0] - c[1];
  if (fr[2] == 0.0 && c[2] > 0) {
    (fr[1] > 0.0 ? c[1] : c[0]) += c[2];
    c[2] = 0;
  }
  if (min_one) {
    for (int b = 0; b < 3; ++b) {
      if (fr[b] > 0.0 && c[b] == 0) {
        const auto donor = static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
        --c[donor];
        ++c[b];
      }
    }
  }
  return c;
}

template <class It>
void seeded_shuffle(It first, It last, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace corpus_detail

/// Assigns train/valid/test by seeded shuffle. With `stratify`, records are
/// grouped by their lexicographically smallest tag and each group is split
/// on its own.
inline std::vector<TrackRecord> make_splits(std::vector<TrackRecord> records, const SplitSpec& spec) {
  spec.validate();
  for (const auto& r : records) {
    if (r.split) throw UsageError("make_splits: record '" + r.track_id + "' already has a split");
  }
  const std::size_t buckets = (spec.train > 0) + (spec.valid > 0) + (spec.test > 0);
  if (records.size() < buckets) {
    throw DataError("make_splits: " + std::to_string(records.size()) + " records cannot fill " +
                    std::to_string(buckets) + " nonempty splits");
  }
  std::mt19937_64 rng(spec.seed);
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string key = spec.stratify && !records[i].tags.empty()
                                ? *std::min_element(records[i].tags.begin(), records[i].tags.end())
                                : std::string();
    groups[key].push_back(i);
  }
  for (auto& [key, idx] : groups) {
    corpus_detail::seeded_shuffle(idx.begin(), idx.end(), rng);
    const auto c = corpus_detail::bucket_sizes(idx.size(), spec, !spec.stratify);
    std::size_t k = 0;
    for (std::size_t i = 0; i < c[0]; ++i) records[idx[k++]].split = Split::train;
    for (std::size_t i = 0; i < c[1]; ++i) records[idx[k++]].split = Split::valid;
    for (std::size_t i = 0; i < c[2]; ++i) records[idx[k++]].split = Split::test;
  }
  return records;
}

inline std::vector<TrackRecord> filter_split(const std::vector<TrackRecord>& records, Split split) {
  std::vector<TrackRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

struct ToyCorpusConfig {
  std::size_t n_classes = 12;
  std::size_t tracks_per_class = 40;
  std::vector<std::size_t> seen{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<std::size_t> unseen{10, 11};
  std::size_t word_dim = 16;
  double base_freq = 200.0;
  double freq_step = 60.0;
  std::vector<double> amplitudes{1.0, 0.5, 0.25, 0.125};
  double noise_sigma = 0.01;
  double duration = 3.0;
  double jitter = 0.03;
  int sample_rate = 22050;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_classes < 2 || tracks_per_class < 1) throw UsageError("toy: need >= 2 classes and >= 1 track per class");
    std::set<std::size_t> s(seen.begin(), seen.end()), u(unseen.begin(), unseen.end());
    if (s.size() != seen.size() || u.size() != unseen.size()) throw UsageError("toy: duplicate class ids");
    for (auto g : unseen) {
      if (s.contains(g)) throw UsageError("toy: class " + std::to_string(g) + " is both seen and unseen");
    }
    if (s.size() + u.size() != n_classes) throw UsageError("toy: seen and unseen classes must cover every class");
    for (auto g : s) if (g >= n_classes) throw UsageError("toy: class id out of range");
    for (auto g : u) if (g >= n_classes) throw UsageError("toy: class id out of range");
    if (seen.size() < 2 * unseen.size()) {
      throw UsageError("toy: each unseen class interpolates two seen classes; need >= 2 x unseen seen classes");
    }
    if (word_dim < 2) throw UsageError("toy: word_dim must be at least 2");
    if (amplitudes.empty()) throw UsageError("toy: at least one harmonic amplitude");
    if (!(jitter >= 0.0 && jitter < 1.0) || !(duration > 0.0) || sample_rate <= 0 || noise_sigma < 0.0) {
      throw UsageError("toy: invalid jitter, duration, sample rate or noise sigma");
    }
    if (!(base_freq > 0.0) || freq_step < 0.0) throw UsageError("toy: invalid frequency rule");
  }

  /// Nominal fundamental of every class: base + step * g for seen classes;
  /// the i-th unseen class sits midway between seen[2i] and seen[2i+1].
  std::vector<double> fundamentals() const {
    std::vector<double> f(n_classes, 0.0);
    for (auto g : seen) f[g] = base_freq + freq_step * static_cast<double>(g);
    for (std::size_t i = 0; i < unseen.size(); ++i) {
      f[unseen[i]] = 0.5 * (f[seen[2 * i]] + f[seen[2 * i + 1]]);
    }
    return f;
  }
};

inline std::string class_tag(std::size_t g) { return "class_" + std::to_string(g); }

struct ToyCorpus {
  std::vector<TrackRecord> records;
  WordVectorTable table;
  std::vector<std::string> seen_tags;
  std::vector<std::string> unseen_tags;
  std::vector<double> fundamentals;  // nominal, per class
};

/// Harmonic tones whose fundamentals and word vectors interpolate together:
/// unseen class i gets f = mean of its two seen parents' fundamentals and
/// v = normalize(v_a + v_b). Tracks carry inline synth specs; records come
/// back without splits.
inline ToyCorpus synth_toy_corpus(const ToyCorpusConfig& config) {
  config.validate();
  ToyCorpus toy;
  toy.fundamentals = config.fundamentals();
  std::mt19937_64 rng(config.seed);

  std::vector<std::vector<double>> vecs(config.n_classes);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto unit = [](std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    const double n = std::sqrt(s);
    for (double& x : v) x /= n;
    return v;
  };
  for (auto g : config.seen) {
    std::vector<double> v(config.word_dim);
    for (double& x : v) x = gauss(rng);
    vecs[g] = unit(std::move(v));
  }
  for (std::size_t i = 0; i < config.unseen.size(); ++i) {
    const auto& a = vecs[config.seen[2 * i]];
    const auto& b = vecs[config.seen[2 * i + 1]];
    std::vector<double> v(config.word_dim);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = a[k] + b[k];
    vecs[config.unseen[i]] = unit(std::move(v));
  }
  toy.table = WordVectorTable(config.word_dim);
  for (std::size_t g = 0; g < config.n_classes; ++g) toy.table.insert(class_tag(g), vecs[g]);
  for (auto g : config.seen) toy.seen_tags.push_back(class_tag(g));
  for (auto g : config.unseen) toy.unseen_tags.push_back(class_tag(g));

  std::uniform_real_distribution<double> jitter(-config.jitter, config.jitter);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (std::size_t g = 0; g < config.n_classes; ++g) {
    for (std::size_t t = 0; t < config.tracks_per_class; ++t) {
      TrackRecord rec;
      char id[32];
      std::snprintf(id, sizeof(id), "c%02zu_t%03zu", g, t);
      rec.track_id = id;
      SynthSpec s;
      s.fundamental = toy.fundamentals[g] * (1.0 + jitter(rng));
      s.phase = phase(rng);
      s.noise_seed = rng();
      s.duration = config.duration;
      s.sample_rate = config.sample_rate;
      s.noise_sigma = config.noise_sigma;
      s.amplitudes = config.amplitudes;
      rec.synth = s;
      rec.tags = {class_tag(g)};
      toy.records.push_back(std::move(rec));
    }
  }
  return toy;
}

/// Seen-class tracks split by `spec` (stratified by class); every
/// unseen-class track goes to test.
inline std::vector<TrackRecord> assign_toy_splits(const ToyCorpus& toy, SplitSpec spec) {
  std::unordered_set<std::string> unseen(toy.unseen_tags.begin(), toy.unseen_tags.end());
  std::vector<TrackRecord> seen_records, unseen_records;
  for (const auto& r : toy.records) {
    (unseen.contains(r.tags.front()) ? unseen_records : seen_records).push_back(r);
  }
  spec.stratify = true;
  auto out = make_splits(std::move(seen_records), spec);
  for (auto& r : unseen_records) {
    r.split = Split::test;
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(),
            [](const TrackRecord& a, const TrackRecord& b) { return a.track_id < b.track_id; });
  return out;
}

/// Loads a record's audio: renders inline synth specs, otherwise reads the
/// WAV path (relative paths resolve against `base_dir`).
inline PcmSignal load_track_audio(const TrackRecord& record, const std::string& base_dir = {}) {
  if (record.synth) return render_synth(*record.synth);
  std::filesystem::path p(record.audio_path);
  if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
  return read_wav_file(p.string());
}

}  // namespace zsl
