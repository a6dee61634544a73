#include "tablesvc/error.hpp"

namespace tablesvc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidRate: return "InvalidRate";
    case ErrorKind::InvalidDim: return "InvalidDim";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyWindow: return "EmptyWindow";
    case ErrorKind::MissingParams: return "MissingParams";
    case ErrorKind::InvalidLabel: return "InvalidLabel";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::BudgetExceedsPool: return "BudgetExceedsPool";
    case ErrorKind::InvalidProbabilities: return "InvalidProbabilities";
    case ErrorKind::EmptyCenters: return "EmptyCenters";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
  }
  return "Unknown";
}

}  // namespace tablesvc
