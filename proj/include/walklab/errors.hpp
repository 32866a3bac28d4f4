#ifndef WALKLAB_ERRORS_HPP
#define WALKLAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace walklab {

/// Malformed input data: mismatched lengths, invalid vertex ids, a graph that
/// is not strongly connected where that is required.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A parameter outside its documented domain.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A mathematical precondition of an experiment does not hold (for example
/// the divergence condition on the edge weights).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A linear solve that could not be carried out to the required accuracy.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  [[nodiscard]] double condition() const { return condition_; }

 private:
  double condition_;
};

/// An exhaustive enumeration that would exceed its configured cap.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// A configuration document that cannot be read or does not describe a
/// valid run.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace walklab

#endif  // WALKLAB_ERRORS_HPP
