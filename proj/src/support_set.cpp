#include "mdra/support_set.hpp"

#include <algorithm>

namespace mdra {

std::vector<int> SupportSet::sorted() const {
  std::vector<int> out = chosen_;
  std::sort(out.begin(), out.end());
  return out;
}

DiscreteAssignment assignment_from_support(const SupportSet& s) {
  DiscreteAssignment b;
  b.bits.assign(s.universe(), 0);
  for (int n : s.chosen()) b.bits[n] = 1;
  return b;
}

std::vector<int> infeasible_candidates(const DecodingState& state,
                                       const FeasibilityOracle& oracle) {
  DiscreteAssignment b = assignment_from_support(state.support);
  std::vector<int> out;
  for (int n = 0; n < state.support.universe(); ++n) {
    if (state.support.contains(n)) continue;
    b.bits[n] = 1;
    if (!oracle.feasible_partial(b)) out.push_back(n);
    b.bits[n] = 0;
  }
  return out;
}

namespace {

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  double r = 1;
  for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
  return r;
}

void enumerate_rec(const FeasibilityOracle& oracle, int universe, int target,
                   int next, DiscreteAssignment& b, std::vector<int>& picked,
                   std::vector<SupportSet>& out) {
  if (static_cast<int>(picked.size()) == target) {
    if (oracle.feasible_final(b)) {
      SupportSet s(universe);
      for (int n : picked) s.insert(n);
      out.push_back(std::move(s));
    }
    return;
  }
  int remaining = target - static_cast<int>(picked.size());
  for (int n = next; n <= universe - remaining; ++n) {
    b.bits[n] = 1;
    // Prefix-applicable constraints prune whole subtrees.
    if (oracle.feasible_partial(b)) {
      picked.push_back(n);
      enumerate_rec(oracle, universe, target, n + 1, b, picked, out);
      picked.pop_back();
    }
    b.bits[n] = 0;
  }
}

}  // namespace

std::vector<SupportSet> enumerate_feasible_supports(
    const FeasibilityOracle& oracle, int universe, int cardinality) {
  if (cardinality < 0 || cardinality > universe)
    return {};
  if (binomial(universe, cardinality) > 1e6)
    throw BudgetError("enumerate_feasible_supports: combinatorial budget exceeded");
  DiscreteAssignment b;
  b.bits.assign(universe, 0);
  std::vector<int> picked;
  std::vector<SupportSet> out;
  enumerate_rec(oracle, universe, cardinality, 0, b, picked, out);
  return out;
}

}  // namespace mdra
