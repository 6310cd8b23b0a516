#pragma once

#include <stdexcept>
#include <string>

namespace fraclap {

/// Rejected input: bad mesh sizes, exponents outside the admissible range, malformed configs.
class ValidationError : public std::invalid_argument {
public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Unrecoverable numerical failure (NaN in an assembled form, eigensolver breakdown).
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace detail
}  // namespace fraclap
