#pragma once

#include <stdexcept>
#include <string>

namespace preflab {

// Inputs violate a documented precondition (bad sizes, non-finite entries,
// unknown names, malformed files).
class InvalidInputError : public std::invalid_argument {
 public:
  explicit InvalidInputError(const std::string& what) : std::invalid_argument(what) {}
};

// Inputs are well-formed but outside the mathematical domain of the operation
// (zero probability where a log-ratio is required, reward bound exceeded, ...).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// A quantity the implementation is responsible for failed its own sanity
// check; indicates a bug or numerically hopeless input, not user error.
class InternalConsistencyError : public std::logic_error {
 public:
  explicit InternalConsistencyError(const std::string& what) : std::logic_error(what) {}
};

// The two policies do not share level sets (condition 1).
class Condition1Violation : public std::runtime_error {
 public:
  explicit Condition1Violation(const std::string& what) : std::runtime_error(what) {}
};

// A target distribution falls outside the decodable image (condition 2).
class Condition2Violation : public std::runtime_error {
 public:
  explicit Condition2Violation(const std::string& what) : std::runtime_error(what) {}
};

// A map defined via level sets is queried although the level-set structure
// does not support it.
class IllDefinedMapError : public std::runtime_error {
 public:
  explicit IllDefinedMapError(const std::string& what) : std::runtime_error(what) {}
};

// Table-backed adapter queried at a point that is not a stored representative.
class UndefinedRepresentativeError : public std::runtime_error {
 public:
  explicit UndefinedRepresentativeError(const std::string& what) : std::runtime_error(what) {}
};

// Optimization produced a non-finite loss.
class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(const std::string& what, int step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step(step) {}
  int step;
};

// Random search for a planted instance exhausted its redraw budget.
class GenerationFailedError : public std::runtime_error {
 public:
  explicit GenerationFailedError(const std::string& what) : std::runtime_error(what) {}
};

// A perturbed fixture failed to break exactly the targeted condition.
class FixtureInvalidError : public std::runtime_error {
 public:
  explicit FixtureInvalidError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace preflab
