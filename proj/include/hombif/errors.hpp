#pragma once

#include <stdexcept>
#include <string>

namespace hombif {

enum class ErrorKind {
  input,          // malformed data, unknown names, non-finite entries
  domain,         // precondition violated (e.g. non-hyperbolic matrix)
  numeric,        // solve failure, overflow, quadrature did not settle
  certification,  // an invariant or hypothesis failed to verify
  indeterminate,  // numerics cannot decide either way
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InputError : Error {
  explicit InputError(const std::string& w) : Error(ErrorKind::input, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::domain, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::numeric, w) {}
};
struct CertificationError : Error {
  explicit CertificationError(const std::string& w)
      : Error(ErrorKind::certification, w) {}
};
struct IndeterminateError : Error {
  explicit IndeterminateError(const std::string& w)
      : Error(ErrorKind::indeterminate, w) {}
};

/// Throws the typed error for `kind` with message `what`.
[[noreturn]] inline void throw_error(ErrorKind kind, const std::string& what) {
  switch (kind) {
    case ErrorKind::input: throw InputError(what);
    case ErrorKind::domain: throw DomainError(what);
    case ErrorKind::numeric: throw NumericError(what);
    case ErrorKind::certification: throw CertificationError(what);
    case ErrorKind::indeterminate: break;
  }
  throw IndeterminateError(what);
}

}  // namespace hombif
