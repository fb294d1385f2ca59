// Copyright 2026 The fferm Authors
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

#ifndef FFERM_ERROR_HPP_
#define FFERM_ERROR_HPP_

#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace fferm {

enum class ErrorCode {
  InvalidArgument,
  NonPositiveArgument,
  InvalidAlphaParam,
  NonDifferentiable,
  OutOfDualDomain,
  LengthMismatch,
  AbsoluteContinuityViolation,
  DimensionMismatch,
  EmptyBatch,
  ClassIndexOutOfRange,
  EmptyGroup,
  EmptyLabel,
  EmptyConditionedSubset,
  NonFiniteUpdate,
  UnsupportedDivergenceForLinf,
  MissingColumn,
  NonNumericFeature,
  UnknownCategory,
  NonBinaryGroup,
  UnsatisfiableSplit,
  ParseError,
  IoError,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonPositiveArgument: return "NonPositiveArgument";
    case ErrorCode::InvalidAlphaParam: return "InvalidAlphaParam";
    case ErrorCode::NonDifferentiable: return "NonDifferentiable";
    case ErrorCode::OutOfDualDomain: return "OutOfDualDomain";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::AbsoluteContinuityViolation: return "AbsoluteContinuityViolation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::ClassIndexOutOfRange: return "ClassIndexOutOfRange";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::EmptyLabel: return "EmptyLabel";
    case ErrorCode::EmptyConditionedSubset: return "EmptyConditionedSubset";
    case ErrorCode::NonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorCode::UnsupportedDivergenceForLinf: return "UnsupportedDivergenceForLinf";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericFeature: return "NonNumericFeature";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::NonBinaryGroup: return "NonBinaryGroup";
    case ErrorCode::UnsatisfiableSplit: return "UnsatisfiableSplit";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

// Non-fatal diagnostics (probability flooring and the like). The sink is
// process-wide; the default one writes each distinct message to stderr once.
using WarningSink = std::function<void(std::string_view)>;

namespace detail {

struct WarningState {
  std::mutex mutex;
  WarningSink sink;
  std::uint64_t count = 0;
  std::string last;
};

inline WarningState& warning_state() {
  static WarningState state;
  return state;
}

}  // namespace detail

inline void set_warning_sink(WarningSink sink) {
  auto& state = detail::warning_state();
  std::lock_guard lock(state.mutex);
  state.sink = std::move(sink);
}

inline std::uint64_t warning_count() {
  auto& state = detail::warning_state();
  std::lock_guard lock(state.mutex);
  return state.count;
}

inline void warn(std::string_view message) {
  auto& state = detail::warning_state();
  std::lock_guard lock(state.mutex);
  ++state.count;
  if (state.sink) {
    state.sink(message);
    return;
  }
  if (state.last != message) {
    state.last = std::string(message);
    std::cerr << "fferm warning: " << message << '\n';
  }
}

}  // namespace fferm

#endif  // FFERM_ERROR_HPP_
