#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prunekit {

enum class Errc {
  kEmptyReasoning,
  kEmptyAnswer,
  kDuplicateId,
  kRhoBelowTrace,
  kInvalidKeepFraction,
  kLengthMismatch,
  kBackendFailure,
  kTimeout,
  kAuthFailure,
  kAlignmentGap,
  kEmptyCorpus,
  kInvalidOrder,
  kSequenceTooLong,
  kUnsupported,
  kDegenerateAnswer,
  kUnsupportedTrace,
  kTooLarge,
  kSpanOutOfBounds,
  kMissingScores,
  kAnnotationMismatch,
  kMissingStepRecords,
  kEmptyInput,
  kZeroVariance,
  kDegenerateTargets,
  kParseError,
  kValidationError,
  kNoGenerationEndpoint,
  kTraceMissing,
  kConfigError,
  kIoError,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace prunekit
