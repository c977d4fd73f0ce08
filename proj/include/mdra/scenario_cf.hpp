#pragma once

#include <vector>

#include "mdra/complex_linalg.hpp"
#include "mdra/rng.hpp"
#include "mdra/support_set.hpp"

namespace mdra {

/// Cell-free downlink configuration. Powers are linear watts.
struct CfConfig {
  int num_aps = 8;        // L
  int num_ues = 20;       // K
  int antennas = 4;       // M per AP
  int k_max = 6;          // max UEs per AP
  int l_max = 2;          // max APs per UE
  double p_max_w = 1.0;   // per-AP power budget
  double noise_w = 1e-13; // sigma^2 per UE
  double area_m = 500.0;  // square side

  int pairs() const { return num_ues * num_aps; }
  int pair_index(int ue, int ap) const { return ue * num_aps + ap; }
  int ue_of(int pair) const { return pair / num_aps; }
  int ap_of(int pair) const { return pair % num_aps; }
  /// Cardinality bound min{K*L_max, L*K_max} on any feasible association.
  int support_bound() const;
  void validate() const;
};

/// One system realization: channels h_kl (length-M complex per UE-AP pair)
/// plus the planar geometry that generated them.
struct CfInstance {
  int num_ues = 0, num_aps = 0, antennas = 0;
  std::vector<std::array<double, 2>> ap_pos;  // L entries, meters
  std::vector<std::array<double, 2>> ue_pos;  // K entries, meters
  CMat channels;  // M x (K*L), column pair_index(k,l) holds h_kl

  CVec channel(int ue, int ap) const {
    return channels.col(static_cast<Eigen::Index>(ue) * num_aps + ap);
  }
};

/// Association + per-pair beamformers; w_kl is zero whenever b_kl = 0.
struct CfSolution {
  SupportSet support;
  std::vector<CVec> w;  // K*L entries, each length M

  explicit CfSolution(int pairs, int antennas)
      : support(pairs), w(pairs, CVec::Zero(antennas)) {}
};

/// Large-scale gain: 30.5 + 36.7*log10(D) dB path loss plus N(0, 4) shadow
/// fading; small-scale uncorrelated Rayleigh. Distances are clamped at 1 m.
CfInstance sample_cf_instance(const CfConfig& cfg, RngStream& rng);

/// Mean path loss in dB at distance d_m (no shadowing).
double cf_path_loss_db(double d_m);

/// Sum rate of Eq.-(9) form: sum_k log2(1 + S_k / (I_k + sigma^2)) with
/// S_k = |sum_l b_kl h_kl^H w_kl|^2 and I_k the co-channel interference.
double cf_sum_rate(const CfConfig& cfg, const CfInstance& inst,
                   const CfSolution& sol);

/// Per-AP load <= K_max and per-UE load <= L_max counting constraints.
FeasibilityOracle cf_constraint_oracle(const CfConfig& cfg);

/// Per-AP transmitted power sum_k ||w_kl||^2 for each AP.
std::vector<double> cf_per_ap_power(const CfConfig& cfg, const CfSolution& sol);

}  // namespace mdra
