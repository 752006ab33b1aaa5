#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dirlap {

// Error taxonomy. The CLI maps families to exit codes:
//   validation_error and descendants -> 2
//   nonconvergence_error, numeric_range_error -> 3
//   io_error -> 4
// anything else -> 1.

// Bad user-supplied values: invalid compositions, malformed formulas,
// mismatched shapes, unknown covariates.
class validation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric argument violates a domain precondition (e.g. alpha <= 0).
class domain_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// A vector that should lie on the simplex does not.
class simplex_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// Formula text does not match the grammar; carries the character position.
class parse_error : public validation_error {
 public:
  parse_error(const std::string& what, std::size_t position)
      : validation_error(what + " (at position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// Formula block count disagrees with the category count.
class arity_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// Matrix/vector dimensions disagree.
class shape_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// A named covariate is missing from the table.
class lookup_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// The linear predictor left the representable range (|eta| > 700). The line
// search treats this as +infinity; anywhere else it is a hard failure.
class numeric_range_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mode search exhausted its iteration budget (derived classes may carry the
// iteration trace).
class nonconvergence_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be read or written.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated internal invariant; indicates a bug, not bad input.
class internal_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dirlap
