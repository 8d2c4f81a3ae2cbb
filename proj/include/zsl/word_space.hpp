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

// Word-vector side information: the text table of pre-trained vectors, tag
// string resolution against it, and the affine projection that places a tag
// vector in the joint space.

#include <cctype>
#include <charconv>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "zsl/error.hpp"
#include "zsl/ndarray.hpp"
#include "zsl/semantic_point.hpp"

namespace zsl {

class WordVectorTable {
 public:
  WordVectorTable() = default;
  explicit WordVectorTable(std::size_t dimension) : dimension_(dimension) {}

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Adds an entry; returns false (and keeps the existing vector) if the
  /// token is already present.
  bool insert(std::string token, std::span<const double> vector) {
    if (token.empty()) throw DataError("WordVectorTable: empty token");
    if (vector.size() != dimension_) {
      throw DataError("WordVectorTable: vector for '" + token + "' has " +
                      std::to_string(vector.size()) + " components, table dimension is " +
                      std::to_string(dimension_));
    }
    for (double v : vector) {
      if (!std::isfinite(v)) throw DataError("WordVectorTable: non-finite component for '" + token + "'");
    }
    if (index_.contains(token)) return false;
    index_.emplace(token, tokens_.size());
    tokens_.push_back(std::move(token));
    data_.insert(data_.end(), vector.begin(), vector.end());
    return true;
  }

  bool contains(const std::string& token) const { return index_.contains(token); }

  std::optional<std::span<const double>> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return std::span<const double>(data_.data() + it->second * dimension_, dimension_);
  }

  std::span<const double> vector(std::size_t i) const {
    return {data_.data() + i * dimension_, dimension_};
  }

  /// Tokens skipped during parsing because they repeated an earlier line.
  std::size_t duplicates_skipped = 0;

 private:
  std::size_t dimension_ = 0;
  std::vector<std::string> tokens_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parses the "token v1 v2 ... vD" text layout (one entry per line, single
/// spaces, no header). D is fixed by the first nonempty line. When
/// `allow_list` is given only those tokens are stored, but every line is
/// still checked for the right field count.
inline WordVectorTable parse_word_vectors(std::istream& in,
                                          const std::unordered_set<std::string>* allow_list = nullptr) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<WordVectorTable> table;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto sp = rest.find(' ');
      const auto field = rest.substr(0, sp);
      if (!field.empty()) fields.push_back(field);
      if (sp == std::string_view::npos) break;
      rest.remove_prefix(sp + 1);
    }
    if (fields.size() < 2) {
      throw DataError("parse_word_vectors: line " + std::to_string(line_no) +
                      ": expected a token followed by at least one value");
    }
    const std::size_t dim = fields.size() - 1;
    if (!table) table.emplace(dim);
    if (dim != table->dimension()) {
      throw DataError("parse_word_vectors: line " + std::to_string(line_no) + ": dimension mismatch (" +
                      std::to_string(dim) + " values, expected " +
                      std::to_string(table->dimension()) + ")");
    }
    std::string token(fields[0]);
    if (allow_list && !allow_list->contains(token)) continue;
    values.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const auto f = fields[i + 1];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), values[i]);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(values[i])) {
        throw DataError("parse_word_vectors: line " + std::to_string(line_no) +
                        ": unparseable value '" + std::string(f) + "'");
      }
    }
    if (!table->insert(std::move(token), values)) ++table->duplicates_skipped;
  }
  if (!table) throw DataError("parse_word_vectors: empty stream");
  return std::move(*table);
}

/// Writes the table in the same text layout, with enough digits that a
/// subsequent parse reproduces every component exactly.
inline void write_word_vectors(const WordVectorTable& table, std::ostream& out) {
  char buf[32];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.tokens()[i];
    for (double v : table.vector(i)) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

enum class ResolutionPolicy { strict, averaged };

enum class ResolutionStatus { exact, joined, averaged, missing };

inline const char* to_string(ResolutionStatus s) {
  switch (s) {
    case ResolutionStatus::exact: return "exact";
    case ResolutionStatus::joined: return "joined";
    case ResolutionStatus::averaged: return "averaged";
    case ResolutionStatus::missing: return "missing";
  }
  return "?";
}

struct TagResolution {
  std::string tag;
  ResolutionStatus status = ResolutionStatus::missing;
  std::optional<std::vector<double>> vector;
};

/// Lowercase (ASCII) and trim surrounding whitespace.
inline std::string normalize_tag(std::string_view tag) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0;
  std::size_t e = tag.size();
  while (b < e && is_space(static_cast<unsigned char>(tag[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(tag[e - 1]))) --e;
  std::string out(tag.substr(b, e - b));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Lookup order: exact token, then the whitespace/hyphen-stripped
/// concatenation, then (averaged policy only) the mean of per-word vectors
/// when every word is present.
inline TagResolution resolve_tag(const WordVectorTable& table, std::string_view tag,
                                 ResolutionPolicy policy = ResolutionPolicy::strict) {
  TagResolution res;
  res.tag = std::string(tag);
  const std::string norm = normalize_tag(tag);
  if (norm.empty()) throw UsageError("resolve_tag: empty tag");
  auto is_sep = [](char c) { return c == '-' || std::isspace(static_cast<unsigned char>(c)); };
  if (auto v = table.find(norm)) {
    res.status = ResolutionStatus::exact;
    res.vector.emplace(v->begin(), v->end());
    return res;
  }
  std::string joined;
  std::vector<std::string> words;
  std::string word;
  for (char c : norm) {
    if (is_sep(c)) {
      if (!word.empty()) words.push_back(std::move(word));
      word.clear();
    } else {
      joined.push_back(c);
      word.push_back(c);
    }
  }
  if (!word.empty()) words.push_back(std::move(word));
  if (joined != norm && !joined.empty()) {
    if (auto v = table.find(joined)) {
      res.status = ResolutionStatus::joined;
      res.vector.emplace(v->begin(), v->end());
      return res;
    }
  }
  if (policy == ResolutionPolicy::averaged && words.size() > 1) {
    std::vector<double> mean(table.dimension(), 0.0);
    for (const auto& w : words) {
      auto v = table.find(w);
      if (!v) return res;
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (*v)[i];
    }
    for (double& m : mean) m /= static_cast<double>(words.size());
    res.status = ResolutionStatus::averaged;
    res.vector = std::move(mean);
  }
  return res;
}

/// Every token resolve_tag may look up for `tags`: the normalized tag, its
/// joined form and its separate words. Used as a parse allow-list so a large
/// table can be loaded for a short candidate list.
inline std::unordered_set<std::string> lookup_tokens(const std::vector<std::string>& tags) {
  std::unordered_set<std::string> out;
  for (const auto& tag : tags) {
    const auto norm = normalize_tag(tag);
    out.insert(norm);
    std::string joined, word;
    for (char c : norm) {
      if (c == '-' || std::isspace(static_cast<unsigned char>(c))) {
        if (!word.empty()) out.insert(word);
        word.clear();
      } else {
        joined.push_back(c);
        word.push_back(c);
      }
    }
    if (!word.empty()) out.insert(word);
    if (!joined.empty()) out.insert(joined);
  }
  return out;
}

struct LabelMatrix {
  std::vector<std::string> kept;
  std::vector<std::vector<double>> vectors;  // parallel to kept
  std::vector<std::string> dropped;
};

/// Resolves every tag, preserving input order among kept tags. Tags that
/// resolve to missing are dropped, not approximated.
inline LabelMatrix build_label_matrix(const WordVectorTable& table,
                                      const std::vector<std::string>& tags,
                                      ResolutionPolicy policy = ResolutionPolicy::strict) {
  if (tags.empty()) throw UsageError("build_label_matrix: empty tag list");
  std::unordered_set<std::string> seen;
  LabelMatrix out;
  for (const auto& tag : tags) {
    const auto norm = normalize_tag(tag);
    if (!seen.insert(norm).second) {
      throw DataError("build_label_matrix: duplicate tag after normalization: '" + norm + "'");
    }
    auto res = resolve_tag(table, tag, policy);
    if (res.vector) {
      out.kept.push_back(tag);
      out.vectors.push_back(std::move(*res.vector));
    } else {
      out.dropped.push_back(tag);
    }
  }
  return out;
}

/// Affine map from word space (D) to joint space (d).
struct ProjectionParams {
  NdArray<double> weight;  // [d x D]
  std::vector<double> bias;  // [d]

  std::size_t joint_dim() const { return weight.rank() == 2 ? weight.dim(0) : 0; }
  std::size_t word_dim() const { return weight.rank() == 2 ? weight.dim(1) : 0; }
};

/// L2-normalize(weight * vector + bias).
inline SemanticPoint project_tag(std::span<const double> vector, const ProjectionParams& params) {
  const std::size_t d = params.joint_dim();
  const std::size_t D = params.word_dim();
  if (d == 0 || params.bias.size() != d) throw DataError("project_tag: malformed projection parameters");
  if (vector.size() != D) {
    throw DataError("project_tag: vector has " + std::to_string(vector.size()) +
                    " components, projection expects " + std::to_string(D));
  }
  std::vector<double> z(d);
  for (std::size_t r = 0; r < d; ++r) {
    double acc = params.bias[r];
    for (std::size_t c = 0; c < D; ++c) acc += params.weight.at(r, c) * vector[c];
    z[r] = acc;
  }
  return normalize_point(z, "project_tag (degenerate zero projection)");
}

}  // namespace zsl
