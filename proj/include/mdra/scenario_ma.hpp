#pragma once

#include <array>
#include <vector>

#include "mdra/complex_linalg.hpp"
#include "mdra/rng.hpp"
#include "mdra/support_set.hpp"

namespace mdra {

/// Movable-antenna downlink configuration. The transmit region is a square of
/// side region_factor * wavelength, sampled on a grid_side x grid_side grid
/// with spacing region/(grid_side - 1), row-major from the bottom-left corner
/// (CP 0 is the phase reference).
struct MaConfig {
  int grid_side = 7;          // N = grid_side^2 candidate positions
  int num_antennas = 6;       // M movable antennas
  int num_ues = 4;            // K
  double wavelength_m = 0.06; // lambda
  double region_factor = 2.0; // region side in wavelengths
  double d_min_m = 0.03;      // minimum MA separation
  double p_max_w = 0.1;       // BS power budget
  double noise_w = 1e-13;
  int num_paths = 16;         // L_p
  double l0_db = 34.5;        // reference path loss
  double alpha = 3.67;        // path-loss exponent
  double ue_dist_min_m = 100.0;
  double ue_dist_max_m = 200.0;

  int num_cps() const { return grid_side * grid_side; }
  void validate() const;
  /// Grid coordinates of all CPs in meters.
  std::vector<std::array<double, 2>> grid_coords() const;
};

/// One realization: CP coordinates, per-(UE, CP) scalar channels, and the
/// per-path responses/angles they were combined from.
struct MaInstance {
  int num_ues = 0, num_cps = 0;
  std::vector<std::array<double, 2>> cp_pos;  // N entries, meters
  CMat channels;  // K x N, channels(k, n) = h_kn
  // Path internals (kept for audits; not persisted in datasets).
  std::vector<std::vector<std::complex<double>>> path_eta;  // [k][lp]
  std::vector<std::vector<double>> path_theta;              // elevation AoD
  std::vector<std::vector<double>> path_phi;                // azimuth AoD
  std::vector<double> ue_dist;                              // D_k
};

/// Positioning + per-UE beamformers over the M selected CPs (ascending CP
/// index ordering).
struct MaSolution {
  SupportSet support;
  std::vector<CVec> w;  // K entries, each length M

  MaSolution(int num_cps, int num_ues, int num_antennas)
      : support(num_cps), w(num_ues, CVec::Zero(num_antennas)) {}
};

/// Field-response channels: h_kn = sum_lp eta_{k,lp} e^{j rho}, with
/// eta ~ CN(0, L0_lin * D_k^-alpha), AoD density cos(theta)/(2*pi) on
/// [-pi/2, pi/2]^2, and rho the phase offset of CP n relative to CP 0.
MaInstance sample_ma_instance(const MaConfig& cfg, RngStream& rng);

/// Channel entries h_kn for the selected CPs, ascending CP index. Throws on
/// wrong cardinality.
CMat selected_channel(const MaInstance& inst, const SupportSet& support,
                      int num_antennas);

/// Sum rate sum_k log2(1 + |h_k^H w_k|^2 / (sum_{l != k} |h_k^H w_l|^2 + n)).
double ma_sum_rate(const MaConfig& cfg, const MaInstance& inst,
                   const MaSolution& sol);

/// Exact-cardinality-M evaluator (final only) plus pairwise minimum-distance
/// evaluators (prefix-applicable). Coordinates are passed explicitly so
/// instances with perturbed CPs bind their own geometry.
FeasibilityOracle ma_constraint_oracle(
    const MaConfig& cfg, const std::vector<std::array<double, 2>>& cp_pos);

}  // namespace mdra
