#include "wmrl/error.hpp"

namespace wmrl {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::BehindCamera: return "BehindCamera";
    case Errc::NonPositiveDepth: return "NonPositiveDepth";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::TooManyEndEffectors: return "TooManyEndEffectors";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::ScheduleMismatch: return "ScheduleMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::EmptyGroup: return "EmptyGroup";
    case Errc::NonPositiveStd: return "NonPositiveStd";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::FinishBeyondHorizon: return "FinishBeyondHorizon";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::TooSmall: return "TooSmall";
    case Errc::Io: return "Io";
    case Errc::MalformedFile: return "MalformedFile";
    case Errc::ConfigParse: return "ConfigParse";
  }
  return "Unknown";
}

}  // namespace wmrl
