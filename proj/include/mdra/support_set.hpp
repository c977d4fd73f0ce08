#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mdra/errors.hpp"

namespace mdra {

/// Binary decision vector over a fixed universe. bits[n] = 1 exactly for the
/// indices in the originating support set.
struct DiscreteAssignment {
  std::vector<uint8_t> bits;

  int count() const {
    int c = 0;
    for (uint8_t b : bits) c += b;
    return c;
  }
};

/// Ordered selection of distinct indices in [0, universe). Selection order is
/// recorded because the decoder is sequential; feasibility and utility depend
/// only on the underlying set.
class SupportSet {
 public:
  explicit SupportSet(int universe) : universe_(universe) {}

  int universe() const { return universe_; }
  const std::vector<int>& chosen() const { return chosen_; }
  int size() const { return static_cast<int>(chosen_.size()); }
  bool terminated() const { return terminated_; }

  bool contains(int n) const {
    for (int c : chosen_)
      if (c == n) return true;
    return false;
  }

  void insert(int n) {
    if (terminated_) throw ShapeError("SupportSet: insertion after termination");
    if (n < 0 || n >= universe_) throw ShapeError("SupportSet: index out of range");
    if (contains(n)) throw ShapeError("SupportSet: duplicate index");
    chosen_.push_back(n);
  }

  void terminate() { terminated_ = true; }

  /// Removes the most recently inserted index (sequential-search rollback).
  void pop_last() {
    if (terminated_) throw ShapeError("SupportSet: pop after termination");
    if (chosen_.empty()) throw ShapeError("SupportSet: pop on empty set");
    chosen_.pop_back();
  }

  /// Set-level equality (ignores order).
  bool same_set(const SupportSet& o) const {
    if (universe_ != o.universe_ || size() != o.size()) return false;
    for (int c : chosen_)
      if (!o.contains(c)) return false;
    return true;
  }

  /// Chosen indices in ascending order.
  std::vector<int> sorted() const;

 private:
  int universe_;
  std::vector<int> chosen_;
  bool terminated_ = false;
};

/// bits[n] = 1 iff n is in the support.
DiscreteAssignment assignment_from_support(const SupportSet& s);

/// Constraint evaluators f_m(b) <= 0 over a fixed universe. Evaluators marked
/// `holds_partially` must be satisfied by every prefix of a valid solution
/// and drive the decoder's mask; the rest (e.g. an exact-cardinality
/// requirement) apply only to completed solutions.
class FeasibilityOracle {
 public:
  struct Constraint {
    std::function<double(const DiscreteAssignment&)> f;
    bool holds_partially = true;
    std::string label;
  };

  void add(std::function<double(const DiscreteAssignment&)> f,
           bool holds_partially, std::string label = "") {
    constraints_.push_back({std::move(f), holds_partially, std::move(label)});
  }

  bool feasible_final(const DiscreteAssignment& b) const {
    for (const auto& c : constraints_)
      if (c.f(b) > 0) return false;
    return true;
  }

  bool feasible_partial(const DiscreteAssignment& b) const {
    for (const auto& c : constraints_)
      if (c.holds_partially && c.f(b) > 0) return false;
    return true;
  }

  const std::vector<Constraint>& constraints() const { return constraints_; }

 private:
  std::vector<Constraint> constraints_;
};

/// Decoder-side view of a partially built support.
struct DecodingState {
  SupportSet support;
  int step = 1;  // next step index t (1-based)

  explicit DecodingState(int universe) : support(universe) {}

  std::vector<int> candidates() const {
    std::vector<int> out;
    for (int n = 0; n < support.universe(); ++n)
      if (!support.contains(n)) out.push_back(n);
    return out;
  }
};

/// The candidates whose single-index extension of the current support
/// violates some prefix-applicable constraint. Returned ascending.
std::vector<int> infeasible_candidates(const DecodingState& state,
                                       const FeasibilityOracle& oracle);

/// All size-`cardinality` subsets with every constraint satisfied, in
/// lexicographic order of the sorted index lists. Throws BudgetError when
/// C(universe, cardinality) exceeds 1e6.
std::vector<SupportSet> enumerate_feasible_supports(
    const FeasibilityOracle& oracle, int universe, int cardinality);

}  // namespace mdra
