#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sightline {

enum class Errc {
  // frame_scheduler
  SourceExhausted,
  ClockRegression,
  // perception
  BackendUnreachable,
  MalformedResponse,
  InvalidBBox,
  // distance
  DegenerateBBox,
  UnknownClass,
  NonPositiveInput,
  // quantization
  EmptyTensor,
  BitWidthTooSmall,
  NonPositiveScale,
  AxisOutOfRange,
  NonFiniteInput,
  // finetune
  EmptyBatch,
  LengthMismatch,
  NonFiniteLoss,
  EmptyDataset,
  // tts_client
  EmptyText,
  SpeakerOutOfRange,
  TextNotNormalized,
  InvalidProsody,
  TtsUnreachable,
  MalformedAck,
  // pipeline
  FileNotFound,
  SchemaViolation,
  AllFramesFailed,
  InitializationError,
};

std::string_view to_string(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace sightline
