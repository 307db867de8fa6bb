// Copyright 2026 The Phonet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace phonet {

// Base class of everything thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Inputs violate a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Iterative numerics failed to converge (Newton solve, 1-D search, fits).
class SolverError : public Error {
 public:
  using Error::Error;
};

// A transverse normal mode has a non-positive eigenvalue (zig-zag onset).
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& msg, int mode) : Error(msg), mode_index(mode) {}
  int mode_index;
};

// A drive component sits on top of a transition it must be detuned from.
class ResonanceError : public Error {
 public:
  using Error::Error;
};

// Requested basis or matrix exceeds the hard size guards.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// A bright/dark pattern matches more than one occupation vector.
class AmbiguousPatternError : public Error {
 public:
  AmbiguousPatternError(const std::string& msg, std::vector<std::vector<int>> cands)
      : Error(msg), candidates(std::move(cands)) {}
  std::vector<std::vector<int>> candidates;
};

// All-dark pattern seen while phonons should be present.
class LostPhononError : public Error {
 public:
  using Error::Error;
};

// Hilbert-space truncation leaked probability above the monitor threshold.
class TruncationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace phonet
