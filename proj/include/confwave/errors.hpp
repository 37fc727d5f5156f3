#pragma once

#include <stdexcept>
#include <string>

namespace confwave {

// Bad input: malformed config, violated preconditions, refused assemblies.
// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation ran but could not produce a trustworthy answer
// (singular system, diverging iteration, uncovered nodes). Exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace confwave
