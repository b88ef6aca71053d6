#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sphmlmc {

/// Grid or quadrature too coarse for the requested band limit.
class ResolutionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Right-hand side violates f(1) = 0.
class CompatibilityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// exp() of the Gaussian field would overflow.
class OverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

/// Linear solver breakdown. pivot() is the failing row, or npos if unknown.
class SolverError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit SolverError(const std::string& what, std::size_t pivot = npos)
      : std::runtime_error(what), pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

}  // namespace sphmlmc
