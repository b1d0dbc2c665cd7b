#pragma once

#include <stdexcept>
#include <string>

namespace lus {

enum class ErrorKind {
  MalformedRow,
  InvalidScore,
  DuplicateImageId,
  UnknownZone,
  ContradictoryStatus,
  TooFewPatients,
  ImageUnreadable,
  CacheFormat,
  EmptyTrainingSet,
  InconsistentDimensions,
  DimensionMismatch,
  LengthMismatch,
  EmptyInput,
  DegenerateClasses,
  ModelFileUnreadable,
  InferenceFailure,
  InvalidConfig,
  Io,
};

// Maps onto the CLI exit codes: Config -> 2, Data -> 3, Model -> 4.
enum class ErrorCategory { Config, Data, Model, Other };

const char* to_string(ErrorKind kind) noexcept;
ErrorCategory default_category(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : Error(kind, message, default_category(kind)) {}
  Error(ErrorKind kind, const std::string& message, ErrorCategory category)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        category_(category) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorKind kind_;
  ErrorCategory category_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::InvalidScore: return "InvalidScore";
    case ErrorKind::DuplicateImageId: return "DuplicateImageId";
    case ErrorKind::UnknownZone: return "UnknownZone";
    case ErrorKind::ContradictoryStatus: return "ContradictoryStatus";
    case ErrorKind::TooFewPatients: return "TooFewPatients";
    case ErrorKind::ImageUnreadable: return "ImageUnreadable";
    case ErrorKind::CacheFormat: return "CacheFormat";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::InconsistentDimensions: return "InconsistentDimensions";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DegenerateClasses: return "DegenerateClasses";
    case ErrorKind::ModelFileUnreadable: return "ModelFileUnreadable";
    case ErrorKind::InferenceFailure: return "InferenceFailure";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

inline ErrorCategory default_category(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidConfig:
      return ErrorCategory::Config;
    case ErrorKind::ModelFileUnreadable:
    case ErrorKind::InferenceFailure:
      return ErrorCategory::Model;
    case ErrorKind::Io:
      return ErrorCategory::Other;
    default:
      return ErrorCategory::Data;
  }
}

}  // namespace lus
