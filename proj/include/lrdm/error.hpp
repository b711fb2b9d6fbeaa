// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lrdm {

enum class ErrorCode {
  DegenerateNorm,
  DimMismatch,
  NonFiniteEvaluation,
  WorldTooSmall,
  InsufficientDistractors,
  MalformedRecord,
  MissingPseudo,
  SequenceTooLong,
  UnknownToken,
  UnsupportedVersion,
  CorruptTensor,
  NonFiniteLoss,
  DegenerateDelta,
  DegenerateBatch,
  CandidateSetInvalid,
  ConfigInvalid,
  MissingArtifact,
  MixedConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (tests, the CLI exit-status mapping) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lrdm
