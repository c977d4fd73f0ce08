#include "mdra/scenario_ma.hpp"

#include <algorithm>
#include <cmath>

namespace mdra {

void MaConfig::validate() const {
  if (grid_side < 2 || num_antennas < 1 || num_ues < 1 || num_paths < 1)
    throw ShapeError("MaConfig: dimensions must be positive");
  if (num_antennas > num_cps())
    throw ShapeError("MaConfig: M must not exceed the CP count");
  if (d_min_m <= 0 || wavelength_m <= 0 || p_max_w <= 0 || noise_w <= 0)
    throw ShapeError("MaConfig: physical parameters must be positive");
}

std::vector<std::array<double, 2>> MaConfig::grid_coords() const {
  double side = region_factor * wavelength_m;
  double spacing = side / (grid_side - 1);
  std::vector<std::array<double, 2>> out;
  out.reserve(num_cps());
  for (int row = 0; row < grid_side; ++row)
    for (int col = 0; col < grid_side; ++col)
      out.push_back({col * spacing, row * spacing});
  return out;
}

MaInstance sample_ma_instance(const MaConfig& cfg, RngStream& rng) {
  cfg.validate();
  MaInstance inst;
  inst.num_ues = cfg.num_ues;
  inst.num_cps = cfg.num_cps();
  inst.cp_pos = cfg.grid_coords();
  inst.channels = CMat::Zero(cfg.num_ues, inst.num_cps);
  inst.path_eta.resize(cfg.num_ues);
  inst.path_theta.resize(cfg.num_ues);
  inst.path_phi.resize(cfg.num_ues);
  inst.ue_dist.resize(cfg.num_ues);
  const double l0_lin = std::pow(10.0, -cfg.l0_db / 10.0);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const double two_pi_over_lambda = 2.0 * M_PI / cfg.wavelength_m;
  const double x0 = inst.cp_pos[0][0];
  const double y0 = inst.cp_pos[0][1];
  for (int k = 0; k < cfg.num_ues; ++k) {
    double dk = rng.uniform(cfg.ue_dist_min_m, cfg.ue_dist_max_m);
    inst.ue_dist[k] = dk;
    double var = l0_lin * std::pow(dk, -cfg.alpha);
    double amp = std::sqrt(var);
    inst.path_eta[k].resize(cfg.num_paths);
    inst.path_theta[k].resize(cfg.num_paths);
    inst.path_phi[k].resize(cfg.num_paths);
    for (int lp = 0; lp < cfg.num_paths; ++lp) {
      inst.path_eta[k][lp] =
          amp * std::complex<double>(rng.normal() * inv_sqrt2,
                                     rng.normal() * inv_sqrt2);
      // Elevation from CDF (1 + sin(theta))/2; azimuth uniform.
      inst.path_theta[k][lp] = std::asin(2.0 * rng.uniform() - 1.0);
      inst.path_phi[k][lp] = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
    }
    for (int n = 0; n < inst.num_cps; ++n) {
      std::complex<double> h{0.0, 0.0};
      for (int lp = 0; lp < cfg.num_paths; ++lp) {
        double theta = inst.path_theta[k][lp];
        double phi = inst.path_phi[k][lp];
        double rho = two_pi_over_lambda *
                     ((inst.cp_pos[n][0] - x0) * std::cos(theta) * std::sin(phi) +
                      (inst.cp_pos[n][1] - y0) * std::sin(theta));
        h += inst.path_eta[k][lp] *
             std::complex<double>(std::cos(rho), std::sin(rho));
      }
      inst.channels(k, n) = h;
    }
  }
  return inst;
}

CMat selected_channel(const MaInstance& inst, const SupportSet& support,
                      int num_antennas) {
  if (support.size() != num_antennas)
    throw ShapeError("selected_channel: support cardinality != M");
  std::vector<int> order = support.sorted();
  CMat out(inst.num_ues, num_antennas);
  for (int m = 0; m < num_antennas; ++m) out.col(m) = inst.channels.col(order[m]);
  return out;
}

double ma_sum_rate(const MaConfig& cfg, const MaInstance& inst,
                   const MaSolution& sol) {
  CMat h_sel = selected_channel(inst, sol.support, cfg.num_antennas);
  double rate = 0;
  for (int k = 0; k < cfg.num_ues; ++k) {
    CVec hk = h_sel.row(k).transpose();  // column h_k; dot() applies the ^H
    double signal = std::norm(hk.dot(sol.w[k]));
    double interference = 0;
    for (int l = 0; l < cfg.num_ues; ++l)
      if (l != k) interference += std::norm(hk.dot(sol.w[l]));
    rate += std::log2(1.0 + signal / (interference + cfg.noise_w));
  }
  return rate;
}

FeasibilityOracle ma_constraint_oracle(
    const MaConfig& cfg, const std::vector<std::array<double, 2>>& cp_pos) {
  FeasibilityOracle oracle;
  const int n_cp = static_cast<int>(cp_pos.size());
  const int m = cfg.num_antennas;
  // Exact cardinality: both sides; only the upper bound constrains prefixes.
  oracle.add(
      [m](const DiscreteAssignment& b) {
        return static_cast<double>(b.count() - m);
      },
      /*holds_partially=*/true, "cardinality_upper");
  oracle.add(
      [m](const DiscreteAssignment& b) {
        return static_cast<double>(m - b.count());
      },
      /*holds_partially=*/false, "cardinality_lower");
  const double d_min = cfg.d_min_m;
  for (int i = 0; i < n_cp; ++i)
    for (int j = i + 1; j < n_cp; ++j) {
      double dx = cp_pos[i][0] - cp_pos[j][0];
      double dy = cp_pos[i][1] - cp_pos[j][1];
      double dist = std::sqrt(dx * dx + dy * dy);
      if (dist >= d_min) continue;  // pair can never violate
      double gap = d_min - dist;
      oracle.add(
          [i, j, gap](const DiscreteAssignment& b) {
            return b.bits[i] && b.bits[j] ? gap : 0.0;
          },
          /*holds_partially=*/true,
          "min_dist_" + std::to_string(i) + "_" + std::to_string(j));
    }
  return oracle;
}

}  // namespace mdra
