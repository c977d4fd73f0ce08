#include "mdra/scenario_cf.hpp"

#include <algorithm>
#include <cmath>

namespace mdra {

int CfConfig::support_bound() const {
  return std::min(num_ues * l_max, num_aps * k_max);
}

void CfConfig::validate() const {
  if (num_aps < 1 || num_ues < 1 || antennas < 1)
    throw ShapeError("CfConfig: dimensions must be positive");
  if (k_max > num_ues || l_max > num_aps)
    throw ShapeError("CfConfig: K_max <= K and L_max <= L required");
  if (p_max_w <= 0 || noise_w <= 0 || area_m <= 0)
    throw ShapeError("CfConfig: powers and area must be positive");
}

double cf_path_loss_db(double d_m) {
  return 30.5 + 36.7 * std::log10(std::max(d_m, 1.0));
}

CfInstance sample_cf_instance(const CfConfig& cfg, RngStream& rng) {
  cfg.validate();
  CfInstance inst;
  inst.num_ues = cfg.num_ues;
  inst.num_aps = cfg.num_aps;
  inst.antennas = cfg.antennas;
  inst.ap_pos.resize(cfg.num_aps);
  inst.ue_pos.resize(cfg.num_ues);
  for (auto& p : inst.ap_pos)
    p = {rng.uniform(0, cfg.area_m), rng.uniform(0, cfg.area_m)};
  for (auto& p : inst.ue_pos)
    p = {rng.uniform(0, cfg.area_m), rng.uniform(0, cfg.area_m)};
  inst.channels = CMat(cfg.antennas, cfg.pairs());
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int k = 0; k < cfg.num_ues; ++k)
    for (int l = 0; l < cfg.num_aps; ++l) {
      double dx = inst.ue_pos[k][0] - inst.ap_pos[l][0];
      double dy = inst.ue_pos[k][1] - inst.ap_pos[l][1];
      double d = std::sqrt(dx * dx + dy * dy);
      double pl_db = cf_path_loss_db(d) + 2.0 * rng.normal();  // F ~ N(0, 4)
      double amp = std::sqrt(std::pow(10.0, -pl_db / 10.0));
      for (int m = 0; m < cfg.antennas; ++m) {
        double re = rng.normal() * inv_sqrt2;
        double im = rng.normal() * inv_sqrt2;
        inst.channels(m, cfg.pair_index(k, l)) = amp * std::complex<double>(re, im);
      }
    }
  return inst;
}

double cf_sum_rate(const CfConfig& cfg, const CfInstance& inst,
                   const CfSolution& sol) {
  DiscreteAssignment b = assignment_from_support(sol.support);
  double rate = 0;
  for (int k = 0; k < cfg.num_ues; ++k) {
    double interference = 0;
    double signal = 0;
    for (int kp = 0; kp < cfg.num_ues; ++kp) {
      std::complex<double> z{0.0, 0.0};
      for (int l = 0; l < cfg.num_aps; ++l) {
        int p = cfg.pair_index(kp, l);
        if (!b.bits[p]) continue;
        z += inst.channel(k, l).dot(sol.w[p]);  // h_kl^H w_{kp,l}
      }
      if (kp == k)
        signal = std::norm(z);
      else
        interference += std::norm(z);
    }
    rate += std::log2(1.0 + signal / (interference + cfg.noise_w));
  }
  return rate;
}

FeasibilityOracle cf_constraint_oracle(const CfConfig& cfg) {
  FeasibilityOracle oracle;
  for (int l = 0; l < cfg.num_aps; ++l) {
    oracle.add(
        [cfg, l](const DiscreteAssignment& b) {
          int load = 0;
          for (int k = 0; k < cfg.num_ues; ++k)
            load += b.bits[cfg.pair_index(k, l)];
          return static_cast<double>(load - cfg.k_max);
        },
        /*holds_partially=*/true, "ap_load_" + std::to_string(l));
  }
  for (int k = 0; k < cfg.num_ues; ++k) {
    oracle.add(
        [cfg, k](const DiscreteAssignment& b) {
          int load = 0;
          for (int l = 0; l < cfg.num_aps; ++l)
            load += b.bits[cfg.pair_index(k, l)];
          return static_cast<double>(load - cfg.l_max);
        },
        /*holds_partially=*/true, "ue_load_" + std::to_string(k));
  }
  return oracle;
}

std::vector<double> cf_per_ap_power(const CfConfig& cfg, const CfSolution& sol) {
  std::vector<double> p(cfg.num_aps, 0.0);
  for (int k = 0; k < cfg.num_ues; ++k)
    for (int l = 0; l < cfg.num_aps; ++l)
      p[l] += sol.w[cfg.pair_index(k, l)].squaredNorm();
  return p;
}

}  // namespace mdra
