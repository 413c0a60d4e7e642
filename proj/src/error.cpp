#include "sightline/error.hpp"

namespace sightline {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::SourceExhausted: return "SourceExhausted";
    case Errc::ClockRegression: return "ClockRegression";
    case Errc::BackendUnreachable: return "BackendUnreachable";
    case Errc::MalformedResponse: return "MalformedResponse";
    case Errc::InvalidBBox: return "InvalidBBox";
    case Errc::DegenerateBBox: return "DegenerateBBox";
    case Errc::UnknownClass: return "UnknownClass";
    case Errc::NonPositiveInput: return "NonPositiveInput";
    case Errc::EmptyTensor: return "EmptyTensor";
    case Errc::BitWidthTooSmall: return "BitWidthTooSmall";
    case Errc::NonPositiveScale: return "NonPositiveScale";
    case Errc::AxisOutOfRange: return "AxisOutOfRange";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::EmptyText: return "EmptyText";
    case Errc::SpeakerOutOfRange: return "SpeakerOutOfRange";
    case Errc::TextNotNormalized: return "TextNotNormalized";
    case Errc::InvalidProsody: return "InvalidProsody";
    case Errc::TtsUnreachable: return "TtsUnreachable";
    case Errc::MalformedAck: return "MalformedAck";
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::AllFramesFailed: return "AllFramesFailed";
    case Errc::InitializationError: return "InitializationError";
  }
  return "Unknown";
}

}  // namespace sightline
