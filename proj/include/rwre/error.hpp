#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rwre {

enum class Errc {
  ZeroDirection,
  ZetaTooLarge,
  DimensionMismatch,
  UnsupportedModel,
  InvalidNeighborSum,
  NonPositiveDrift,
  KappaTooLarge,
  BadBlockLength,
  EmptySequence,
  SupportMismatch,
  InvalidLaw,
  RateTooLarge,
  NoBlocks,
  NoSurvivors,
  BadRegion,
  PreconditionFailed,
  DegenerateEvent,
  InvalidArgument,
  ConfigInvalid,
  IoError,
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

}  // namespace rwre
