#pragma once

#include <stdexcept>
#include <string>

namespace stv {

// Incompatible extents, ranks or axis arguments.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside its admissible numeric range, or a result that is
// undefined for the given input (e.g. MAWE of a static video).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed container, config or auxiliary input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stv
