#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace codefi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An argument outside the mathematical domain of a map (p outside (0,1), ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class UnsupportedDimension : public Error {
 public:
  using Error::Error;
};

// Inconsistent or incomplete problem description (config, constraint set, schedule).
class SpecificationError : public Error {
 public:
  using Error::Error;
};

// More constraints than unknowns (N x D coordinates).
class OverdeterminedError : public Error {
 public:
  using Error::Error;
};

// A payoff produced NaN.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class BandwidthError : public Error {
 public:
  BandwidthError(const std::string& what, std::size_t row) : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class StencilError : public Error {
 public:
  StencilError(const std::string& what, std::size_t node) : Error(what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

}  // namespace codefi
