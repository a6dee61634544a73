#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tablesvc {

enum class ErrorKind {
  EmptyDataset,
  IoFailure,
  ManifestMismatch,
  InvariantViolation,
  InvalidConfig,
  InvalidRate,
  InvalidDim,
  DimMismatch,
  EmptyInput,
  EmptyWindow,
  MissingParams,
  InvalidLabel,
  NonFinite,
  DivergedLoss,
  BudgetExceedsPool,
  InvalidProbabilities,
  EmptyCenters,
  TooLarge,
  LengthMismatch,
  DegenerateLabels,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tablesvc
