#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qrock {

/// Every failure the library can report. Each code belongs to exactly one
/// module, which is what the CLI prints in its error record.
enum class ErrorCode {
  // graphstore
  EmptyName,
  DuplicateName,
  UnknownModel,
  UnknownEntity,
  UnknownInterface,
  IncompatibleInterfaces,
  CardinalityViolation,
  KindMismatch,
  DomainMismatch,
  HierarchyCycle,
  IoFailure,
  SchemaViolation,
  // simkin
  MissingAnnotation,
  NonTreeStructure,
  InvalidRobotSpec,
  InvalidConfig,
  // cfm
  PhaseOutOfRange,
  DimensionMismatch,
  OutOfBounds,
  // explore
  SingleClassData,
  InvalidArgument,
  // cluster
  KTooLarge,
  DegenerateData,
  // cores
  MissingTarget,
  UnsatisfiableConstraint,
  NoFeasibleSample,
  OverlappingActuators,
  UnknownOntologyPolicyViolation,
  EmptyAnnotation,
  // reason
  UnknownTerm,
  UnknownTask,
  NoMethod,
  NoCapableRobot,
  OntologyCycle,
  // cli
  UsageError,
  ProjectLocked,
  NotFound,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyName: return "EmptyName";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::UnknownEntity: return "UnknownEntity";
    case ErrorCode::UnknownInterface: return "UnknownInterface";
    case ErrorCode::IncompatibleInterfaces: return "IncompatibleInterfaces";
    case ErrorCode::CardinalityViolation: return "CardinalityViolation";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::HierarchyCycle: return "HierarchyCycle";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::MissingAnnotation: return "MissingAnnotation";
    case ErrorCode::NonTreeStructure: return "NonTreeStructure";
    case ErrorCode::InvalidRobotSpec: return "InvalidRobotSpec";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::PhaseOutOfRange: return "PhaseOutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::SingleClassData: return "SingleClassData";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::MissingTarget: return "MissingTarget";
    case ErrorCode::UnsatisfiableConstraint: return "UnsatisfiableConstraint";
    case ErrorCode::NoFeasibleSample: return "NoFeasibleSample";
    case ErrorCode::OverlappingActuators: return "OverlappingActuators";
    case ErrorCode::UnknownOntologyPolicyViolation: return "UnknownOntologyPolicyViolation";
    case ErrorCode::EmptyAnnotation: return "EmptyAnnotation";
    case ErrorCode::UnknownTerm: return "UnknownTerm";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::NoMethod: return "NoMethod";
    case ErrorCode::NoCapableRobot: return "NoCapableRobot";
    case ErrorCode::OntologyCycle: return "OntologyCycle";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::ProjectLocked: return "ProjectLocked";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

constexpr std::string_view module_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyName:
    case ErrorCode::DuplicateName:
    case ErrorCode::UnknownModel:
    case ErrorCode::UnknownEntity:
    case ErrorCode::UnknownInterface:
    case ErrorCode::IncompatibleInterfaces:
    case ErrorCode::CardinalityViolation:
    case ErrorCode::KindMismatch:
    case ErrorCode::DomainMismatch:
    case ErrorCode::HierarchyCycle:
    case ErrorCode::IoFailure:
    case ErrorCode::SchemaViolation:
      return "graphstore";
    case ErrorCode::MissingAnnotation:
    case ErrorCode::NonTreeStructure:
    case ErrorCode::InvalidRobotSpec:
    case ErrorCode::InvalidConfig:
      return "simkin";
    case ErrorCode::PhaseOutOfRange:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::OutOfBounds:
      return "cfm";
    case ErrorCode::SingleClassData:
    case ErrorCode::InvalidArgument:
      return "explore";
    case ErrorCode::KTooLarge:
    case ErrorCode::DegenerateData:
      return "cluster";
    case ErrorCode::MissingTarget:
    case ErrorCode::UnsatisfiableConstraint:
    case ErrorCode::NoFeasibleSample:
    case ErrorCode::OverlappingActuators:
    case ErrorCode::UnknownOntologyPolicyViolation:
    case ErrorCode::EmptyAnnotation:
      return "cores";
    case ErrorCode::UnknownTerm:
    case ErrorCode::UnknownTask:
    case ErrorCode::NoMethod:
    case ErrorCode::NoCapableRobot:
    case ErrorCode::OntologyCycle:
      return "reason";
    case ErrorCode::UsageError:
    case ErrorCode::ProjectLocked:
    case ErrorCode::NotFound:
      return "cli";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view module() const noexcept { return module_of(code_); }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace qrock
