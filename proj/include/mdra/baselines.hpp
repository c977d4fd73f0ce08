#pragma once

#include <functional>

#include "mdra/scenario_cf.hpp"
#include "mdra/scenario_ma.hpp"

namespace mdra {

struct WmmseConfig {
  int max_iters = 50;
  double tol = 1e-6;  // rate convergence
};

/// Greedy UE-AP association: UEs in ascending index each claim their L_max
/// strongest APs, skipping APs already serving K_max UEs. Feasible by
/// construction and deterministic.
SupportSet greedy_association(const CfConfig& cfg, const CfInstance& inst);

/// Greedy CP selection by mean channel gain with minimum-distance masking
/// over M sequential picks. Throws DeadEndError if it gets stuck.
SupportSet greedy_positioning(const MaConfig& cfg, const MaInstance& inst);

/// Uniform M-subset rejection sampling against the distance constraints
/// (budget 1e5 draws).
SupportSet random_positioning(const MaConfig& cfg, const MaInstance& inst,
                              RngStream& rng);

struct WmmseResult {
  std::vector<CVec> w;                // per-UE beamformers
  std::vector<double> rate_per_iter;  // achieved sum rate after each iteration
};

/// Weighted-MMSE alternating optimization under a single transmit power
/// budget (sum_k ||w_k||^2 <= p_max); the power multiplier is found by
/// bisection. `h[k]` is UE k's channel. Non-convergence returns the last
/// iterate; the per-iteration rates are reported for monotonicity audits.
WmmseResult wmmse_per_bs(const std::vector<CVec>& h, double p_max, double noise,
                         const WmmseConfig& cfg);

/// Weighted-MMSE under per-AP power constraints for a fixed association:
/// each UE's beamformer lives on its serving APs' antennas and per-AP
/// multipliers are driven to complementary slackness by coordinate-wise
/// bisection sweeps.
struct CfWmmseResult {
  CfSolution solution;
  std::vector<double> rate_per_iter;
};
CfWmmseResult wmmse_cf(const CfConfig& cfg, const CfInstance& inst,
                       const SupportSet& support, const WmmseConfig& wcfg);

/// Zero-forcing directions (pseudo-inverse columns) with equal per-UE power
/// p_max / K. Requires M >= K and full row rank; throws NumericalError
/// otherwise.
std::vector<CVec> zf_beamform(const std::vector<CVec>& h, double p_max);

/// Convenience: WMMSE beamformers for a fixed MA positioning.
MaSolution solve_ma_wmmse(const MaConfig& cfg, const MaInstance& inst,
                          const SupportSet& support, const WmmseConfig& wcfg);
MaSolution solve_ma_zf(const MaConfig& cfg, const MaInstance& inst,
                       const SupportSet& support);

struct BruteForceResult {
  SupportSet best;
  double rate = 0.0;
  int evaluated = 0;
};

/// Exhaustive search over feasible supports, scoring each with the supplied
/// continuous solver; deterministic lexicographic tie-break. Throws
/// BudgetError beyond `budget` feasible supports.
BruteForceResult brute_force_joint_ma(
    const MaConfig& cfg, const MaInstance& inst, const FeasibilityOracle& oracle,
    const std::function<double(const SupportSet&)>& solve_rate, int budget);

/// Cell-free variant: supports of every cardinality 0..support_bound().
BruteForceResult brute_force_joint_cf(
    const CfConfig& cfg, const CfInstance& inst, const FeasibilityOracle& oracle,
    const std::function<double(const SupportSet&)>& solve_rate, int budget);

}  // namespace mdra
