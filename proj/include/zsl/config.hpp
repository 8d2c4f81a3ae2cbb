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

// Flat "dotted.key = value" run configuration. Every tunable of the DSP,
// encoder, trainer, toy corpus and split lives under one key; unknown keys
// are rejected and every value is validated before any work starts.

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "zsl/audio_encoder.hpp"
#include "zsl/corpus.hpp"
#include "zsl/dsp.hpp"
#include "zsl/error.hpp"
#include "zsl/evaluation.hpp"
#include "zsl/trainer.hpp"
#include "zsl/word_space.hpp"

namespace zsl {

namespace config_detail {

inline std::string fmt(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    if constexpr (std::is_floating_point_v<T>) {
      os << fmt(v[i]);
    } else {
      os << v[i];
    }
  }
  return os.str();
}

}  // namespace config_detail

struct ResolvedConfig {
  DspConfig dsp;
  EncoderConfig encoder;
  TrainConfig train;
  ToyCorpusConfig toy;
  SplitSpec split;
  ResolutionPolicy policy = ResolutionPolicy::strict;
  AucAveraging averaging = AucAveraging::macro;
  std::size_t threads = 1;
};

class RunConfig {
 public:
  RunConfig() {
    using config_detail::fmt;
    using config_detail::join;
    const DspConfig d;
    const EncoderConfig e;
    const TrainConfig t;
    const ToyCorpusConfig y;
    const SplitSpec s{0.75, 0.0, 0.25, 0, true};
    values_ = {
        {"dsp.target_sample_rate", std::to_string(d.target_sample_rate)},
        {"dsp.frame_size", std::to_string(d.frame_size)},
        {"dsp.hop_size", std::to_string(d.hop_size)},
        {"dsp.n_mels", std::to_string(d.n_mels)},
        {"dsp.f_min", fmt(d.f_min)},
        {"dsp.f_max", fmt(d.f_max)},
        {"dsp.log_epsilon", fmt(d.log_epsilon)},
        {"encoder.patch_frames", std::to_string(e.patch_frames)},
        {"encoder.patch_stride", std::to_string(e.patch_stride)},
        {"encoder.blocks", std::to_string(e.blocks())},
        {"encoder.channels", join(e.channels)},
        {"encoder.kernel", std::to_string(e.kernel)},
        {"encoder.pool", std::to_string(e.pool)},
        {"encoder.joint_dim", std::to_string(e.joint_dim)},
        {"train.margin", fmt(t.margin)},
        {"train.negatives", std::to_string(t.negatives)},
        {"train.batch_size", std::to_string(t.batch_size)},
        {"train.learning_rate", fmt(t.learning_rate)},
        {"train.beta1", fmt(t.beta1)},
        {"train.beta2", fmt(t.beta2)},
        {"train.adam_epsilon", fmt(t.adam_epsilon)},
        {"train.epochs", std::to_string(t.epochs)},
        {"train.seed", std::to_string(t.seed)},
        {"train.deterministic", t.deterministic ? "on" : "off"},
        {"toy.n_classes", std::to_string(y.n_classes)},
        {"toy.tracks_per_class", std::to_string(y.tracks_per_class)},
        {"toy.seen", join(y.seen)},
        {"toy.unseen", join(y.unseen)},
        {"toy.word_dim", std::to_string(y.word_dim)},
        {"toy.base_freq", fmt(y.base_freq)},
        {"toy.freq_step", fmt(y.freq_step)},
        {"toy.amplitudes", join(y.amplitudes)},
        {"toy.noise_sigma", fmt(y.noise_sigma)},
        {"toy.duration", fmt(y.duration)},
        {"toy.jitter", fmt(y.jitter)},
        {"toy.sample_rate", std::to_string(y.sample_rate)},
        {"toy.seed", std::to_string(y.seed)},
        {"split.train", fmt(s.train)},
        {"split.valid", fmt(s.valid)},
        {"split.test", fmt(s.test)},
        {"split.seed", std::to_string(s.seed)},
        {"split.stratify", s.stratify ? "on" : "off"},
        {"word.policy", "strict"},
        {"eval.averaging", "macro"},
        {"run.threads", "1"},
    };
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("config: unknown key '" + key + "'");
    it->second = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("config: unknown key '" + key + "'");
    return it->second;
  }

  /// Applies "key=value" (or "key = value") text.
  void set_assignment(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw UsageError("config: expected key=value, got '" + text + "'");
    set(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }

  void load(std::istream& in, const std::string& origin = "config") {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      try {
        set_assignment(t);
      } catch (const UsageError& e) {
        throw UsageError(origin + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("config: cannot open " + path);
    load(in, path);
  }

  /// Effective configuration, one "key = value" line per key, sorted.
  std::string dump() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  /// dump() without run.* keys; those tune resources, not results, so a
  /// checkpoint stays byte-identical whatever thread count trained it.
  std::string dump_model() const {
    std::string out;
    for (const auto& [k, v] : values_) {
      if (!k.starts_with("run.")) out += k + " = " + v + "\n";
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Parses and validates every section.
  ResolvedConfig resolve() const {
    ResolvedConfig r;
    r.dsp.target_sample_rate = as<int>("dsp.target_sample_rate");
    r.dsp.frame_size = as<std::size_t>("dsp.frame_size");
    r.dsp.hop_size = as<std::size_t>("dsp.hop_size");
    r.dsp.n_mels = as<std::size_t>("dsp.n_mels");
    r.dsp.f_min = as<double>("dsp.f_min");
    r.dsp.f_max = as<double>("dsp.f_max");
    r.dsp.log_epsilon = as<double>("dsp.log_epsilon");

    r.encoder.patch_frames = as<std::size_t>("encoder.patch_frames");
    r.encoder.patch_stride = as<std::size_t>("encoder.patch_stride");
    r.encoder.channels = list<std::size_t>("encoder.channels");
    if (as<std::size_t>("encoder.blocks") != r.encoder.channels.size()) {
      throw UsageError("config: encoder.blocks must equal the number of encoder.channels entries");
    }
    r.encoder.kernel = as<std::size_t>("encoder.kernel");
    r.encoder.pool = as<std::size_t>("encoder.pool");
    r.encoder.joint_dim = as<std::size_t>("encoder.joint_dim");
    r.encoder.n_mels = r.dsp.n_mels;

    r.train.margin = as<double>("train.margin");
    r.train.negatives = as<std::size_t>("train.negatives");
    r.train.batch_size = as<std::size_t>("train.batch_size");
    r.train.learning_rate = as<double>("train.learning_rate");
    r.train.beta1 = as<double>("train.beta1");
    r.train.beta2 = as<double>("train.beta2");
    r.train.adam_epsilon = as<double>("train.adam_epsilon");
    r.train.epochs = as<std::size_t>("train.epochs");
    r.train.seed = as<std::uint64_t>("train.seed");
    r.train.deterministic = flag("train.deterministic");

    r.toy.n_classes = as<std::size_t>("toy.n_classes");
    r.toy.tracks_per_class = as<std::size_t>("toy.tracks_per_class");
    r.toy.seen = list<std::size_t>("toy.seen");
    r.toy.unseen = list<std::size_t>("toy.unseen");
    r.toy.word_dim = as<std::size_t>("toy.word_dim");
    r.toy.base_freq = as<double>("toy.base_freq");
    r.toy.freq_step = as<double>("toy.freq_step");
    r.toy.amplitudes = list<double>("toy.amplitudes");
    r.toy.noise_sigma = as<double>("toy.noise_sigma");
    r.toy.duration = as<double>("toy.duration");
    r.toy.jitter = as<double>("toy.jitter");
    r.toy.sample_rate = as<int>("toy.sample_rate");
    r.toy.seed = as<std::uint64_t>("toy.seed");

    r.split.train = as<double>("split.train");
    r.split.valid = as<double>("split.valid");
    r.split.test = as<double>("split.test");
    r.split.seed = as<std::uint64_t>("split.seed");
    r.split.stratify = flag("split.stratify");

    const auto& policy = get("word.policy");
    if (policy == "strict") {
      r.policy = ResolutionPolicy::strict;
    } else if (policy == "averaged") {
      r.policy = ResolutionPolicy::averaged;
    } else {
      throw UsageError("config: word.policy must be 'strict' or 'averaged'");
    }
    const auto& avg = get("eval.averaging");
    if (avg == "macro") {
      r.averaging = AucAveraging::macro;
    } else if (avg == "global") {
      r.averaging = AucAveraging::global;
    } else {
      throw UsageError("config: eval.averaging must be 'macro' or 'global'");
    }
    r.threads = as<std::size_t>("run.threads");
    if (r.threads < 1) throw UsageError("config: run.threads must be at least 1");

    r.dsp.validate();
    r.encoder.validate();
    r.train.validate();
    r.toy.validate();
    r.split.validate();
    return r;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  template <class T>
  static T parse_value(const std::string& key, const std::string& text) {
    T v{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || text.empty()) {
      throw UsageError("config: invalid value '" + text + "' for " + key);
    }
    return v;
  }

  template <class T>
  T as(const std::string& key) const {
    return parse_value<T>(key, get(key));
  }

  template <class T>
  std::vector<T> list(const std::string& key) const {
    std::vector<T> out;
    const auto& text = get(key);
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto comma = text.find(',', start);
      const auto item = trim(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (!item.empty()) out.push_back(parse_value<T>(key, item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }

  bool flag(const std::string& key) const {
    const auto& v = get(key);
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw UsageError("config: " + key + " must be on or off");
  }

  std::map<std::string, std::string> values_;
};

}  // namespace zsl
