#pragma once

#include <stdexcept>
#include <string>

namespace spinefuse {

/// Failure categories. Each maps onto one CLI exit status.
enum class ErrorKind {
  StructuralInput,  // malformed mesh, bad indices, non-finite coordinates
  Parse,            // unreadable or malformed file
  Lookup,           // missing landmark / vertebra label
  Parameter,        // out-of-range scalar argument
  Config,           // inconsistent configuration block
  Degenerate,       // collinear landmarks, coincident endplate points
  Solver,           // non-SPD system, under-constrained problem
  InsideTest,       // wrap surface not closed
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures caused by the inputs rather than the numerics.
  bool is_input_error() const noexcept {
    return kind_ == ErrorKind::StructuralInput || kind_ == ErrorKind::Parse ||
           kind_ == ErrorKind::Lookup || kind_ == ErrorKind::Parameter ||
           kind_ == ErrorKind::Config || kind_ == ErrorKind::InsideTest;
  }

 private:
  ErrorKind kind_;
};

/// Raised by the sparse solver when a pivot is not positive.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, long pivot)
      : Error(ErrorKind::Solver, what), pivot_(pivot) {}

  /// Offending pivot in the caller's (unpermuted, pre-elimination) indexing, -1 if unknown.
  long pivot() const noexcept { return pivot_; }

 private:
  long pivot_;
};

}  // namespace spinefuse
