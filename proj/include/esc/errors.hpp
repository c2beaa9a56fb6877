#pragma once

#include <stdexcept>
#include <string>

namespace esc {

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input files (IDX, CIFAR batches, snapshots, configs).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operation requested on the wrong label or network variant.
struct WrongVariant : std::logic_error {
  using std::logic_error::logic_error;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Dense computation refused because the problem exceeds the desk-scale guard.
struct SizeGuard : std::length_error {
  using std::length_error::length_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace esc
