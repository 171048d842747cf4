// Copyright (c) 2026 The invx Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace invx {

/// Every recoverable failure in the library is reported as an `Error` with one
/// of these codes. Names are stable; they appear in REST error bodies and logs.
enum class ErrorCode {
  // core
  MalformedAmount,
  CurrencyMismatch,
  Overflow,
  InvalidArgument,
  // ingest
  UnknownFormat,
  CorruptPdf,
  EncryptedPdf,
  RasterizerUnavailable,
  DecodeError,
  // preprocess
  ImageTooSmall,
  BlankPage,
  DegenerateHistogram,
  // ocr
  NoEngineConfigured,
  AllEnginesFailed,
  EngineError,
  // llm
  LlmUnavailable,
  MissingAuthKey,
  FixtureMiss,
  Unrepairable,
  NotAnObject,
  // validate
  UnparseableDate,
  ImpossibleDate,
  UnknownUnit,
  // export / io
  IoError,
  // service
  NotFound,
  JobNotReviewable,
  UnknownField,
  NormalizationFailed,
  Conflict,
  Unauthorized,
  // eval
  EmptyReference,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace invx
