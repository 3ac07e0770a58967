#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace coalesce {

enum class ErrorKind {
  Io,
  EmptyTable,
  DuplicateColumn,
  MissingCell,
  UnknownColumn,
  UnseenLevel,
  NonFiniteValue,
  MissingFeature,
  DimensionMismatch,
  InvalidArgument,
  DegenerateGram,
  NotPositiveDefinite,
  SingularSubmatrix,
  SingularNormalMatrix,
  CoalitionCapExceeded,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "Io";
    case ErrorKind::EmptyTable: return "EmptyTable";
    case ErrorKind::DuplicateColumn: return "DuplicateColumn";
    case ErrorKind::MissingCell: return "MissingCell";
    case ErrorKind::UnknownColumn: return "UnknownColumn";
    case ErrorKind::UnseenLevel: return "UnseenLevel";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::MissingFeature: return "MissingFeature";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateGram: return "DegenerateGram";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::SingularSubmatrix: return "SingularSubmatrix";
    case ErrorKind::SingularNormalMatrix: return "SingularNormalMatrix";
    case ErrorKind::CoalitionCapExceeded: return "CoalitionCapExceeded";
  }
  return "Unknown";
}

/// Every failure raised by the library. `row` and `coalition` carry the
/// offending row index / coalition mask when one is known.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> row() const noexcept { return row_; }
  std::optional<unsigned long long> coalition() const noexcept { return coalition_; }

  Error& with_row(std::size_t row) {
    row_ = row;
    return *this;
  }
  Error& with_coalition(unsigned long long mask) {
    coalition_ = mask;
    return *this;
  }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> row_;
  std::optional<unsigned long long> coalition_;
};

}  // namespace coalesce
