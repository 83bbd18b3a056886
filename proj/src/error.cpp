#include "zood/error.hpp"

namespace zood {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::NonFinite: return "NonFinite";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::DidNotConverge: return "DidNotConverge";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::CovarianceDegenerate: return "CovarianceDegenerate";
    case Errc::TooFewDomains: return "TooFewDomains";
    case Errc::InconsistentBundles: return "InconsistentBundles";
    case Errc::NumericalUnderflow: return "NumericalUnderflow";
    case Errc::DegenerateSeries: return "DegenerateSeries";
    case Errc::DegenerateTruth: return "DegenerateTruth";
    case Errc::SingularFit: return "SingularFit";
    case Errc::TooLarge: return "TooLarge";
    case Errc::BadMagic: return "BadMagic";
    case Errc::VersionUnsupported: return "VersionUnsupported";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::RangeViolation: return "RangeViolation";
    case Errc::IoError: return "IoError";
    case Errc::UnknownDataset: return "UnknownDataset";
    case Errc::UnknownMethod: return "UnknownMethod";
  }
  return "Unknown";
}

bool is_io_error(Errc code) {
  switch (code) {
    case Errc::BadMagic:
    case Errc::VersionUnsupported:
    case Errc::TruncatedFile:
    case Errc::IoError:
      return true;
    default:
      return false;
  }
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

Error Error::with_context(const std::string& context) const { return Error(code_, context + detail_); }

}  // namespace zood
