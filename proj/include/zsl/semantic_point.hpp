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

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "zsl/error.hpp"

namespace zsl {

/// A unit-norm vector in the joint audio/label space. Both branches produce
/// these; scores between them are plain dot products.
struct SemanticPoint {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
  friend bool operator==(const SemanticPoint&, const SemanticPoint&) = default;
};

/// Scales `v` to unit norm. Throws NumericalError on a zero (or non-finite)
/// norm instead of dividing by zero.
inline SemanticPoint normalize_point(std::span<const double> v, const char* where) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw NumericalError(std::string(where) + ": cannot normalize a zero or non-finite vector");
  }
  SemanticPoint p;
  p.values.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p.values[i] = v[i] / n;
  return p;
}

/// Dot product, which equals cosine similarity for unit-norm points.
inline double point_score(const SemanticPoint& a, const SemanticPoint& b) {
  if (a.size() != b.size()) {
    throw DataError("point_score: dimension mismatch " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

}  // namespace zsl
