#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zood {

enum class Errc {
  NonFinite,
  SingularSystem,
  DidNotConverge,
  DimensionMismatch,
  InvalidArgument,
  CovarianceDegenerate,
  TooFewDomains,
  InconsistentBundles,
  NumericalUnderflow,
  DegenerateSeries,
  DegenerateTruth,
  SingularFit,
  TooLarge,
  BadMagic,
  VersionUnsupported,
  TruncatedFile,
  RangeViolation,
  IoError,
  UnknownDataset,
  UnknownMethod,
};

std::string_view to_string(Errc code);

// Errors that come from reading or writing files, as opposed to bad values.
bool is_io_error(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);
  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  // Same code, detail prefixed with context (e.g. "domain 2: ").
  Error with_context(const std::string& context) const;

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace zood
