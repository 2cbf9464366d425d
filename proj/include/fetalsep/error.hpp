#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fetalsep {

enum class ErrorCode {
  TooShort,
  InvalidBand,
  BadConfig,
  ShapeMismatch,
  DegenerateSignal,
  ZeroNoise,
  EmptyDataset,
  IoError,
  VersionMismatch,
  CorruptFile,
  FsMismatch,
  ConstantReference,
  DegenerateVariance,
  ZeroEnergy,
  AllTied,
};

std::string_view to_string(ErrorCode code);

// Process exit status used by the CLI: 2 usage/config, 3 data, 4 numeric.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fetalsep
