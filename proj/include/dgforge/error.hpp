#pragma once

#include <stdexcept>
#include <string>

namespace dgforge {

/// Bad input: malformed config, dimension mismatch, invalid geometry.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf or divergence during a numerical procedure.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace dgforge
