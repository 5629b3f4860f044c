#ifndef CNML_CORE_ERRORS_HPP
#define CNML_CORE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cnml {

// Error taxonomy shared by the whole library. The C API maps each kind
// onto a status code, so keep the set small and stable.
enum class ErrorKind {
  ContractViolation,   // bad arguments, dimension mismatches, invariant breaks
  NumericalFailure,    // non-finite values, singular/indefinite matrices
  ConvergenceFailure,  // optimizer hit max_iters above tolerance
  ParseError,          // malformed input files
  IoError,             // missing/unwritable files
  CapExceeded,         // enumeration size cap
  InsufficientData     // e.g. too few collected SGD iterates
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

// Convergence failures carry the final gradient norm so callers can decide
// whether the capped iterate is usable.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, double grad_inf_norm)
      : Error(ErrorKind::ConvergenceFailure, what),
        grad_inf_norm_(grad_inf_norm) {}
  double grad_inf_norm() const { return grad_inf_norm_; }

private:
  double grad_inf_norm_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(ErrorKind::ContractViolation, msg);
}

}  // namespace cnml

#endif
