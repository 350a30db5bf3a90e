#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wmrl {

// Every failure mode surfaced by the library. Callers switch on code();
// the message carries the human-readable detail.
enum class Errc {
  BehindCamera,
  NonPositiveDepth,
  InvalidArgument,
  TooManyEndEffectors,
  IndexOutOfRange,
  NonFiniteValue,
  ScheduleMismatch,
  ShapeMismatch,
  EmptyDataset,
  EmptyGroup,
  NonPositiveStd,
  LengthMismatch,
  EmptyInput,
  FinishBeyondHorizon,
  DimensionMismatch,
  TooSmall,
  Io,
  MalformedFile,
  ConfigParse,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace wmrl
