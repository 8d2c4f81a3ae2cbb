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

// `zsl` command line: synth, train, annotate, retrieve, evaluate, transfer,
// gradcheck. Exit codes: 0 ok, 1 usage, 2 data/format, 3 numerical.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "zsl/checkpoint.hpp"
#include "zsl/config.hpp"
#include "zsl/corpus.hpp"
#include "zsl/error.hpp"
#include "zsl/evaluation.hpp"
#include "zsl/gradcheck.hpp"
#include "zsl/inference.hpp"
#include "zsl/pipeline.hpp"
#include "zsl/wav.hpp"
#include "zsl/word_space.hpp"

namespace zsl {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

namespace cli_detail {

namespace fs = std::filesystem;

inline std::string read_text_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string(what) + ": cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

/// One tag per line; blank lines and '#' comments ignored.
inline std::vector<std::string> read_tag_list(const std::string& path) {
  std::istringstream in(read_text_file(path, "tag list"));
  std::vector<std::string> tags;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = normalize_tag(line);
    if (t.empty() || t[0] == '#') continue;
    tags.push_back(t);
  }
  if (tags.empty()) throw DataError("tag list " + path + " is empty");
  return tags;
}

inline WordVectorTable read_word_table(const std::string& path, const std::vector<std::string>& needed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("word vectors: cannot open " + path);
  const auto allow = lookup_tokens(needed);
  try {
    return parse_word_vectors(in, &allow);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

struct Manifest {
  std::vector<TrackRecord> records;
  std::string base_dir;
};

inline Manifest read_manifest(const std::string& path, const std::string& split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("manifest: cannot open " + path);
  Manifest m;
  try {
    m.records = load_manifest(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
  m.base_dir = fs::path(path).parent_path().string();
  if (split != "all") {
    m.records = filter_split(m.records, *parse_split(split));
    if (m.records.empty()) throw DataError("manifest " + path + ": no records in split '" + split + "'");
  }
  return m;
}

/// Union of record tags in first-appearance order.
inline std::vector<std::string> record_tags(const std::vector<TrackRecord>& records) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    for (const auto& t : r.tags) {
      if (seen.insert(normalize_tag(t)).second) out.push_back(normalize_tag(t));
    }
  }
  return out;
}

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline std::string comment_block(const std::string& text) {
  std::string out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out += "# " + line + "\n";
  return out;
}

/// Flags shared by every subcommand. Precedence: built-in defaults, then
/// --config, then --set, then the dedicated flags.
struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  std::string deterministic = "on";
  std::size_t threads = 1;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* det_opt = nullptr;
  CLI::Option* threads_opt = nullptr;

  void attach(CLI::App* sub, const std::string& seed_help) {
    sub->add_option("--config", config_path, "Config file of 'dotted.key = value' lines");
    sub->add_option("--set", sets, "Override one config key (KEY=VALUE); repeatable");
    seed_opt = sub->add_option("--seed", seed, seed_help);
    det_opt = sub->add_option("--deterministic", deterministic, "Reproducible training order (on|off)")
                  ->check(CLI::IsMember({"on", "off"}));
    threads_opt = sub->add_option("--threads", threads, "Worker threads for feature extraction and embedding")
                      ->check(CLI::PositiveNumber);
  }

  /// Builds the effective config; `seed_keys` receive --seed when given.
  RunConfig build(const std::vector<std::string>& seed_keys) const {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& s : sets) cfg.set_assignment(s);
    if (seed_opt->count()) {
      for (const auto& k : seed_keys) cfg.set(k, std::to_string(seed));
    }
    if (det_opt->count()) cfg.set("train.deterministic", deterministic);
    if (threads_opt->count()) cfg.set("run.threads", std::to_string(threads));
    cfg.resolve();  // validate everything before any work starts
    return cfg;
  }
};

}  // namespace cli_detail

/// Runs the command line. Output goes to `out`, diagnostics to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"Zero-shot music tagging and retrieval in a joint audio/word embedding space", "zsl"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  std::function<int()> action;

  // synth
  Common synth_c;
  std::string synth_out;
  bool synth_wav = false;
  auto* synth = app.add_subcommand("synth", "Write the toy corpus: manifest, word vectors, tag lists, config");
  synth_c.attach(synth, "Toy corpus and split seed (toy.seed, split.seed)");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_flag("--wav", synth_wav, "Export float32 WAV files instead of inline synth specs");
  synth->callback([&] {
    action = [&] {
      const auto cfg = synth_c.build({"toy.seed", "split.seed"});
      const auto r = cfg.resolve();
      const auto toy = synth_toy_corpus(r.toy);
      auto records = assign_toy_splits(toy, r.split);
      const fs::path dir(synth_out);
      fs::create_directories(dir);
      if (synth_wav) {
        fs::create_directories(dir / "wav");
        for (auto& rec : records) {
          const auto rel = "wav/" + rec.track_id + ".wav";
          write_wav_file((dir / rel).string(), render_synth(*rec.synth), WavEncoding::float32);
          rec.audio_path = rel;
          rec.synth.reset();
        }
      }
      std::ostringstream manifest;
      write_manifest(manifest, records, "zsl synth toy corpus\n" + cfg.dump());
      write_text_file(dir / "manifest.tsv", manifest.str());
      std::ostringstream words;
      write_word_vectors(toy.table, words);
      write_text_file(dir / "words.txt", words.str());
      auto lines = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& t : v) s += t + "\n";
        return s;
      };
      std::vector<std::string> all = toy.seen_tags;
      all.insert(all.end(), toy.unseen_tags.begin(), toy.unseen_tags.end());
      write_text_file(dir / "seen_tags.txt", lines(toy.seen_tags));
      write_text_file(dir / "unseen_tags.txt", lines(toy.unseen_tags));
      write_text_file(dir / "all_tags.txt", lines(all));
      write_text_file(dir / "config.txt", cfg.dump());
      std::size_t counts[3] = {0, 0, 0};
      for (const auto& rec : records) ++counts[static_cast<int>(*rec.split)];
      out << "wrote " << records.size() << " tracks (" << counts[0] << " train, " << counts[1] << " valid, "
          << counts[2] << " test), " << toy.table.size() << " word vectors to " << dir.string() << "\n";
      return kExitOk;
    };
  });

  // train
  Common train_c;
  std::string train_manifest, train_words, train_tags, train_ckpt, train_split = "train";
  auto* train = app.add_subcommand("train", "Fit the audio encoder and word projection; write a checkpoint");
  train_c.attach(train, "Training seed (train.seed)");
  train->add_option("--manifest", train_manifest, "Track manifest (TSV)")->required();
  train->add_option("--word-vectors", train_words, "Word vector table (token v1 .. vD per line)")->required();
  train->add_option("--tags", train_tags, "Training vocabulary, one tag per line (default: all manifest tags)");
  train->add_option("--checkpoint", train_ckpt, "Output checkpoint path")->required();
  train->add_option("--split", train_split, "Manifest split to train on (train|valid|test|all)")
      ->check(CLI::IsMember({"train", "valid", "test", "all"}));
  train->callback([&] {
    action = [&] {
      const auto cfg = train_c.build({"train.seed"});
      const auto r = cfg.resolve();
      const auto m = read_manifest(train_manifest, train_split);
      const auto vocab = train_tags.empty() ? record_tags(m.records) : read_tag_list(train_tags);
      const auto table = read_word_table(train_words, vocab);
      auto outcome = train_checkpoint(m.records, vocab, table, r.policy, r.dsp, r.encoder, r.train, m.base_dir,
                                      r.threads, [&](std::size_t epoch, double loss) {
                                        out << "epoch " << epoch + 1 << "/" << r.train.epochs
                                            << " loss " << fixed(loss, 6) << "\n";
                                        out.flush();
                                      });
      auto& ckpt = outcome.checkpoint;
      ckpt.effective_config = cfg.dump_model();
      save_checkpoint_file(ckpt, train_ckpt);
      out << "vocabulary: " << outcome.data.vocab.size() << " kept, " << outcome.data.dropped_tags.size()
          << " dropped\n";
      for (const auto& d : outcome.data.dropped_tags) err << "warning: tag '" << d << "' not in word table, dropped\n";
      if (!outcome.data.skipped_tracks.empty()) {
        err << "warning: " << outcome.data.skipped_tracks.size() << " track(s) without a vocabulary tag skipped\n";
      }
      out << "trained on " << outcome.data.tracks.size() << " tracks; checkpoint " << checkpoint_identity(ckpt)
          << " written to " << train_ckpt << "\n";
      return kExitOk;
    };
  });

  // annotate
  Common ann_c;
  std::string ann_ckpt, ann_words, ann_tags, ann_manifest, ann_split = "all", ann_out;
  std::vector<std::string> ann_audio;
  double ann_threshold = 0.6;
  std::size_t ann_topk = 10;
  auto* ann = app.add_subcommand("annotate", "Tag audio with the candidate labels whose cosine passes a threshold");
  ann_c.attach(ann, "Unused (annotation is deterministic); accepted for uniformity");
  ann->add_option("--checkpoint", ann_ckpt, "Trained checkpoint")->required();
  ann->add_option("--word-vectors", ann_words, "Word vector table")->required();
  ann->add_option("--tags", ann_tags, "Candidate labels, one per line (default: checkpoint vocabulary)");
  ann->add_option("--threshold", ann_threshold, "Cosine threshold in [-1, 1]");
  ann->add_option("--topk", ann_topk, "Ranked labels printed per track");
  ann->add_option("--manifest", ann_manifest, "Annotate the tracks of this manifest");
  ann->add_option("--split", ann_split, "Manifest split (train|valid|test|all)")
      ->check(CLI::IsMember({"train", "valid", "test", "all"}));
  ann->add_option("--out", ann_out, "Also write the results (with provenance header) to this file");
  ann->add_option("audio", ann_audio, "WAV files to annotate");
  ann->callback([&] {
    action = [&] {
      if (!(ann_threshold >= -1.0 && ann_threshold <= 1.0)) {
        throw UsageError("annotate: --threshold must lie in [-1, 1] (cosine range)");
      }
      if (ann_topk < 1) throw UsageError("annotate: --topk must be at least 1");
      if (ann_audio.empty() && ann_manifest.empty()) throw UsageError("annotate: give WAV files or --manifest");
      const auto cfg = ann_c.build({});
      const auto r = cfg.resolve();
      const auto ckpt = load_checkpoint_file(ann_ckpt);
      const auto candidates = ann_tags.empty() ? ckpt.tag_vocab : read_tag_list(ann_tags);
      const auto table = read_word_table(ann_words, candidates);
      const auto index = build_label_index(ckpt, candidates, table);
      for (const auto& d : index.dropped) err << "warning: candidate '" << d << "' not in word table, dropped\n";
      std::vector<std::pair<std::string, SemanticPoint>> points;
      for (const auto& path : ann_audio) points.emplace_back(path, embed_audio(ckpt, read_wav_file(path)));
      if (!ann_manifest.empty()) {
        const auto m = read_manifest(ann_manifest, ann_split);
        for (auto& t : embed_records(ckpt, m.records, m.base_dir, r.threads)) points.emplace_back(t.id, t.point);
      }
      std::ostringstream body;
      body << "# track\tselected\tranking\n";
      for (const auto& [id, point] : points) {
        const auto res = annotate_point(point, index, ann_threshold);
        body << id << '\t';
        if (res.selected.empty()) body << '-';
        for (std::size_t i = 0; i < res.selected.size(); ++i) body << (i ? "," : "") << res.selected[i];
        body << '\t';
        const auto k = std::min(ann_topk, res.ranking.size());
        for (std::size_t i = 0; i < k; ++i) {
          body << (i ? " " : "") << res.ranking[i].tag << ':' << fixed(res.ranking[i].score);
        }
        body << '\n';
      }
      out << body.str();
      if (!ann_out.empty()) {
        write_text_file(ann_out, comment_block("checkpoint " + checkpoint_identity(ckpt) + "\nthreshold " +
                                               fixed(ann_threshold) + "\n" + cfg.dump()) +
                                     body.str());
      }
      return kExitOk;
    };
  });

  // retrieve
  Common ret_c;
  std::string ret_ckpt, ret_words, ret_manifest, ret_query, ret_split = "all", ret_out;
  std::size_t ret_topk = 10;
  auto* ret = app.add_subcommand("retrieve", "Rank manifest tracks by cosine to a query tag");
  ret_c.attach(ret, "Unused (retrieval is deterministic); accepted for uniformity");
  ret->add_option("--checkpoint", ret_ckpt, "Trained checkpoint")->required();
  ret->add_option("--word-vectors", ret_words, "Word vector table")->required();
  ret->add_option("--manifest", ret_manifest, "Tracks to rank")->required();
  ret->add_option("--query", ret_query, "Query tag (any word in the table)")->required();
  ret->add_option("--topk", ret_topk, "Tracks returned (at most the corpus size)");
  ret->add_option("--split", ret_split, "Manifest split (train|valid|test|all)")
      ->check(CLI::IsMember({"train", "valid", "test", "all"}));
  ret->add_option("--out", ret_out, "Also write the ranking (with provenance header) to this file");
  auto* ret_topk_opt = ret->get_option("--topk");
  ret->callback([&] {
    action = [&] {
      if (ret_topk < 1) throw UsageError("retrieve: --topk must be at least 1");
      const auto cfg = ret_c.build({});
      const auto r = cfg.resolve();
      const auto ckpt = load_checkpoint_file(ret_ckpt);
      const auto table = read_word_table(ret_words, {ret_query});
      const auto m = read_manifest(ret_manifest, ret_split);
      std::size_t k = ret_topk;
      if (!ret_topk_opt->count()) k = std::min(k, m.records.size());
      const auto tracks = embed_records(ckpt, m.records, m.base_dir, r.threads);
      const auto ranking = retrieve_tracks(ckpt, ret_query, table, tracks, k);
      std::ostringstream body;
      body << "# rank\ttrack\tscore\n";
      for (std::size_t i = 0; i < ranking.size(); ++i) {
        body << i + 1 << '\t' << ranking[i].track_id << '\t' << fixed(ranking[i].score) << '\n';
      }
      out << body.str();
      if (!ret_out.empty()) {
        write_text_file(ret_out, comment_block("checkpoint " + checkpoint_identity(ckpt) + "\nquery " + ret_query +
                                               "\n" + cfg.dump()) +
                                     body.str());
      }
      return kExitOk;
    };
  });

  // evaluate / transfer share their flags.
  struct EvalFlags {
    Common common;
    std::string ckpt, words, manifest, tags, split = "test", protocol = "auc", averaging, out;
  };
  auto add_eval = [&](EvalFlags& f, const std::string& name, const std::string& help, bool transfer) {
    auto* sub = app.add_subcommand(name, help);
    f.common.attach(sub, "Unused (evaluation is deterministic); accepted for uniformity");
    sub->add_option("--checkpoint", f.ckpt, "Trained checkpoint")->required();
    sub->add_option("--word-vectors", f.words, "Word vector table")->required();
    sub->add_option("--manifest", f.manifest, transfer ? "Target corpus manifest" : "Corpus manifest")->required();
    auto* tags = sub->add_option("--tags", f.tags,
                                 transfer ? "Target candidate tags, one per line"
                                          : "Candidate tags, one per line (default: checkpoint vocabulary)");
    if (transfer) tags->required();
    sub->add_option("--split", f.split, "Manifest split to evaluate (train|valid|test|all)")
        ->check(CLI::IsMember({"train", "valid", "test", "all"}));
    sub->add_option("--protocol", f.protocol, "auc: per-tag retrieval AUC; accuracy: top-1 genre accuracy")
        ->check(CLI::IsMember({"auc", "accuracy"}));
    sub->add_option("--averaging", f.averaging, "AUC averaging (macro|global; default: eval.averaging)")
        ->check(CLI::IsMember({"macro", "global"}));
    sub->add_option("--out", f.out, "Write the report as JSON Lines records to this file");
    sub->callback([&f, &action, &out, &err, transfer] {
      action = [&f, &out, &err, transfer] {
        auto cfg = f.common.build({});
        if (!f.averaging.empty()) cfg.set("eval.averaging", f.averaging);
        const auto r = cfg.resolve();
        const auto ckpt = load_checkpoint_file(f.ckpt);
        const auto m = read_manifest(f.manifest, f.split);
        const auto candidates = f.tags.empty() ? ckpt.tag_vocab : read_tag_list(f.tags);
        const auto table = read_word_table(f.words, candidates);
        const auto protocol = f.protocol == "auc" ? Protocol::auc : Protocol::accuracy;
        auto rep = transfer ? transfer_evaluate(ckpt, m.records, candidates, table, protocol, m.base_dir, r.threads,
                                                r.averaging)
                            : evaluate_checkpoint(ckpt, m.records, candidates, table, protocol, m.base_dir,
                                                  r.threads, r.averaging);
        rep.effective_config = "[training]\n" + ckpt.effective_config + "[evaluation]\n" + cfg.dump();
        if (rep.evaluated_on_training_tracks) {
          err << "warning: some evaluated tracks were used to train this checkpoint\n";
        }
        print_report_table(rep, out);
        if (!f.out.empty()) {
          std::ostringstream records;
          write_report_records(rep, records);
          write_text_file(f.out, records.str());
        }
        return kExitOk;
      };
    });
  };
  EvalFlags eval_f, transfer_f;
  add_eval(eval_f, "evaluate", "Score a checkpoint on a held-out split of a corpus (AUC or accuracy)", false);
  add_eval(transfer_f, "transfer",
           "Zero-shot transfer: feed a foreign corpus's test tracks and candidate tags to a frozen checkpoint",
           true);

  // gradcheck
  Common gc_c;
  std::size_t gc_seeds = 20;
  double gc_eps = 1e-5, gc_tol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "Central finite-difference check of every layer and the full objective");
  gc_c.attach(gc, "First random seed");
  gc->add_option("--seeds", gc_seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  gc->add_option("--epsilon", gc_eps, "Finite-difference step")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", gc_tol, "Maximum allowed relative error")->check(CLI::PositiveNumber);
  gc->callback([&] {
    action = [&] {
      gc_c.build({});
      const auto entries = run_gradient_suite(gc_c.seed, gc_seeds, gc_eps);
      std::map<std::string, double> worst;
      std::vector<std::string> order;
      double max_err = 0.0;
      bool finite = true;
      for (const auto& e : entries) {
        if (!worst.contains(e.name)) order.push_back(e.name);
        auto& w = worst[e.name];
        w = std::max(w, e.result.max_rel_error);
        if (!std::isfinite(e.result.max_rel_error)) finite = false;
        max_err = std::max(max_err, e.result.max_rel_error);
      }
      for (const auto& name : order) {
        char line[128];
        std::snprintf(line, sizeof(line), "%-26s %.3e\n", name.c_str(), worst[name]);
        out << line;
      }
      char line[128];
      std::snprintf(line, sizeof(line), "max relative error %.3e over %zu seeds (tolerance %.1e)\n", max_err,
                    gc_seeds, gc_tol);
      out << line;
      if (!finite || !(max_err < gc_tol)) {
        err << "gradcheck: maximum relative error exceeds tolerance\n";
        return kExitNumerical;
      }
      return kExitOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
      err << "zsl: unknown subcommand '" << argv[1] << "'\n" << app.help();
      return kExitUsage;
    }
    err << "zsl: " << e.what() << "\n";
    auto* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failed->help();
    return kExitUsage;
  }
  try {
    return action ? action() : kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace zsl
