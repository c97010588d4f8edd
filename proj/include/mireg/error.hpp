#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mireg {

enum class Errc {
  GridMismatch,
  TooSmall,
  ConstantVolume,
  BadWindow,
  NonFinite,
  NonFiniteLoss,
  BadKnots,
  BadKnotCount,
  OutOfDomain,
  BadHistogram,
  OutOfRange,
  RejectionOverflow,
  EmptyLabel,
  LengthMismatch,
  OutOfExtent,
  UnsupportedDatatype,
  UnsupportedOrientation,
  Malformed,
  IoFailure,
  InvalidArgument,
};

constexpr std::string_view errc_name(Errc c) noexcept {
  switch (c) {
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::TooSmall: return "TooSmall";
    case Errc::ConstantVolume: return "ConstantVolume";
    case Errc::BadWindow: return "BadWindow";
    case Errc::NonFinite: return "NonFinite";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::BadKnots: return "BadKnots";
    case Errc::BadKnotCount: return "BadKnotCount";
    case Errc::OutOfDomain: return "OutOfDomain";
    case Errc::BadHistogram: return "BadHistogram";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::RejectionOverflow: return "RejectionOverflow";
    case Errc::EmptyLabel: return "EmptyLabel";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::OutOfExtent: return "OutOfExtent";
    case Errc::UnsupportedDatatype: return "UnsupportedDatatype";
    case Errc::UnsupportedOrientation: return "UnsupportedOrientation";
    case Errc::Malformed: return "Malformed";
    case Errc::IoFailure: return "IoFailure";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mireg
