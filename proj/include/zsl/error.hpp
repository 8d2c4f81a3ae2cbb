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

#include <stdexcept>
#include <string>

namespace zsl {

/// Base class of every error raised by the library. The CLI maps the three
/// subclasses onto its exit codes (1 usage, 2 data/format, 3 numerical).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or violated precondition supplied by a caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data: files, manifests, shapes, tags.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, degenerate normalizations, failed gradient checks.
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <class E>
[[noreturn]] inline void raise(const std::string& where, const std::string& what) {
  throw E(where + ": " + what);
}

}  // namespace detail

}  // namespace zsl
