#pragma once

#include <stdexcept>
#include <string>

namespace esdg {

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// degenerate Lagrange basis, inconsistent operator sets, etc.
struct InconsistentOperators : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct InvalidGeometry : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StabilityPreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AdmissibilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace esdg
