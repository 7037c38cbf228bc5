#include "rwre/error.hpp"

namespace rwre {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ZeroDirection: return "ZeroDirection";
    case Errc::ZetaTooLarge: return "ZetaTooLarge";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::UnsupportedModel: return "UnsupportedModel";
    case Errc::InvalidNeighborSum: return "InvalidNeighborSum";
    case Errc::NonPositiveDrift: return "NonPositiveDrift";
    case Errc::KappaTooLarge: return "KappaTooLarge";
    case Errc::BadBlockLength: return "BadBlockLength";
    case Errc::EmptySequence: return "EmptySequence";
    case Errc::SupportMismatch: return "SupportMismatch";
    case Errc::InvalidLaw: return "InvalidLaw";
    case Errc::RateTooLarge: return "RateTooLarge";
    case Errc::NoBlocks: return "NoBlocks";
    case Errc::NoSurvivors: return "NoSurvivors";
    case Errc::BadRegion: return "BadRegion";
    case Errc::PreconditionFailed: return "PreconditionFailed";
    case Errc::DegenerateEvent: return "DegenerateEvent";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace rwre
