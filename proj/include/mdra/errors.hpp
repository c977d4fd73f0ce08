#pragma once

#include <stdexcept>
#include <string>

namespace mdra {

/// Shape or arity mismatch while building a computation.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A forward pass produced a NaN or infinity; carries the offending node.
struct NonFiniteError : std::runtime_error {
  int node_id;
  NonFiniteError(int node, const std::string& msg)
      : std::runtime_error(msg), node_id(node) {}
};

/// Greedy decoding reached a state where no feasible action exists.
struct DeadEndError : std::runtime_error {
  explicit DeadEndError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Combinatorial enumeration or rejection sampling exceeded its budget.
struct BudgetError : std::runtime_error {
  explicit BudgetError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure in a matrix factorization (e.g. non-PD pivot).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File format, header, or hash mismatch.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mdra
