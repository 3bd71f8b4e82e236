#pragma once

#include <stdexcept>
#include <string>

namespace gradecf {

enum class ErrorKind {
  InvalidScale,
  UnknownGradeSymbol,
  GradeOutOfRange,
  DuplicateRecord,
  MalformedRow,
  UnknownStudent,
  UnknownCourse,
  UnknownTerm,
  SelfSimilarityRequested,
  DegenerateMatrix,
  WrongModelKind,
  InvalidConfig,
  InsufficientStudents,
  EmptyPairList,
  EmptyReport,
  DestinationUnwritable,
  MalformedModel,
  FingerprintMismatch,
  UnknownModel,
  NoDataset,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidScale: return "InvalidScale";
    case ErrorKind::UnknownGradeSymbol: return "UnknownGradeSymbol";
    case ErrorKind::GradeOutOfRange: return "GradeOutOfRange";
    case ErrorKind::DuplicateRecord: return "DuplicateRecord";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::UnknownStudent: return "UnknownStudent";
    case ErrorKind::UnknownCourse: return "UnknownCourse";
    case ErrorKind::UnknownTerm: return "UnknownTerm";
    case ErrorKind::SelfSimilarityRequested: return "SelfSimilarityRequested";
    case ErrorKind::DegenerateMatrix: return "DegenerateMatrix";
    case ErrorKind::WrongModelKind: return "WrongModelKind";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InsufficientStudents: return "InsufficientStudents";
    case ErrorKind::EmptyPairList: return "EmptyPairList";
    case ErrorKind::EmptyReport: return "EmptyReport";
    case ErrorKind::DestinationUnwritable: return "DestinationUnwritable";
    case ErrorKind::MalformedModel: return "MalformedModel";
    case ErrorKind::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorKind::UnknownModel: return "UnknownModel";
    case ErrorKind::NoDataset: return "NoDataset";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

// Every failure raised by the library carries a kind so front ends can map
// it onto exit codes or HTTP statuses without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gradecf
