#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "mdra/cvln.hpp"
#include "mdra/rng.hpp"
#include "mdra/scenario_cf.hpp"
#include "mdra/scenario_ma.hpp"

using namespace mdra;

namespace {

/// Independent scalar evaluator of the cell-free sum rate, written directly
/// from the SINR definition with per-UE terms exposed.
std::vector<double> cf_rate_terms_oracle(const CfConfig& cfg,
                                         const CfInstance& inst,
                                         const CfSolution& sol) {
  DiscreteAssignment b = assignment_from_support(sol.support);
  std::vector<double> terms(cfg.num_ues);
  for (int k = 0; k < cfg.num_ues; ++k) {
    std::vector<std::complex<double>> z(cfg.num_ues, {0, 0});
    for (int kp = 0; kp < cfg.num_ues; ++kp)
      for (int l = 0; l < cfg.num_aps; ++l) {
        int p = kp * cfg.num_aps + l;
        if (!b.bits[p]) continue;
        std::complex<double> dot{0, 0};
        for (int m = 0; m < cfg.antennas; ++m)
          dot += std::conj(inst.channels(m, k * cfg.num_aps + l)) * sol.w[p](m);
        z[kp] += dot;
      }
    double interf = 0;
    for (int kp = 0; kp < cfg.num_ues; ++kp)
      if (kp != k) interf += std::norm(z[kp]);
    terms[k] = std::log2(1.0 + std::norm(z[k]) / (interf + cfg.noise_w));
  }
  return terms;
}

double ma_rate_oracle(const MaConfig& cfg, const MaInstance& inst,
                      const MaSolution& sol) {
  std::vector<int> sel = sol.support.sorted();
  double rate = 0;
  for (int k = 0; k < cfg.num_ues; ++k) {
    std::vector<std::complex<double>> z(cfg.num_ues, {0, 0});
    for (int l = 0; l < cfg.num_ues; ++l)
      for (int m = 0; m < cfg.num_antennas; ++m)
        z[l] += std::conj(inst.channels(k, sel[m])) * sol.w[l](m);
    double interf = 0;
    for (int l = 0; l < cfg.num_ues; ++l)
      if (l != k) interf += std::norm(z[l]);
    rate += std::log2(1.0 + std::norm(z[k]) / (interf + cfg.noise_w));
  }
  return rate;
}

}  // namespace

TEST_CASE("cf path loss arithmetic") {
  CHECK(cf_path_loss_db(100.0) == doctest::Approx(103.9).epsilon(1e-12));
  // Distances are clamped at 1 m.
  CHECK(cf_path_loss_db(0.01) == doctest::Approx(30.5).epsilon(1e-12));
}

TEST_CASE("cf sampling: channel power matches the path-loss model (Monte Carlo)") {
  CfConfig cfg;
  cfg.num_aps = 1;
  cfg.num_ues = 1;
  cfg.antennas = 2;
  cfg.k_max = 1;
  cfg.l_max = 1;
  cfg.area_m = 400.0;
  double acc = 0;
  int n = 0;
  const int kSamples = 60000;
  for (int i = 0; i < kSamples; ++i) {
    RngStream rng(1000 + i, "cfmc");
    CfInstance inst = sample_cf_instance(cfg, rng);
    double dx = inst.ue_pos[0][0] - inst.ap_pos[0][0];
    double dy = inst.ue_pos[0][1] - inst.ap_pos[0][1];
    double d = std::max(std::sqrt(dx * dx + dy * dy), 1.0);
    double mean_gain_db = -cf_path_loss_db(d);
    acc += inst.channel(0, 0).squaredNorm() / std::pow(10.0, mean_gain_db / 10.0);
    n += 1;
  }
  // E[||h||^2] = M * 10^(-PL/10) * E[10^(-F/10)], F ~ N(0, 4):
  // lognormal mean factor exp(sigma^2 ln(10)^2 / 200) with sigma = 2 dB.
  double lognormal = std::exp(4.0 * std::pow(std::log(10.0) / 10.0, 2) / 2.0);
  double expect = cfg.antennas * lognormal;
  CHECK(std::abs(acc / n - expect) / expect < 0.03);
}

TEST_CASE("cf sampling determinism") {
  CfConfig cfg;
  cfg.num_aps = 2;
  cfg.num_ues = 3;
  cfg.antennas = 2;
  cfg.k_max = 3;
  cfg.l_max = 2;
  RngStream r1(42, "det"), r2(42, "det");
  CfInstance a = sample_cf_instance(cfg, r1);
  CfInstance b = sample_cf_instance(cfg, r2);
  CHECK(a.channels == b.channels);
  CHECK(a.ue_pos == b.ue_pos);
}

TEST_CASE("cf_sum_rate: trivial cases") {
  CfConfig cfg;
  cfg.num_aps = 1;
  cfg.num_ues = 1;
  cfg.antennas = 1;
  cfg.k_max = 1;
  cfg.l_max = 1;
  cfg.noise_w = 1.0;
  cfg.p_max_w = 9.0;
  CfInstance inst;
  inst.num_ues = 1;
  inst.num_aps = 1;
  inst.antennas = 1;
  inst.channels = CMat::Ones(1, 1);

  CfSolution zero(1, 1);
  zero.support.insert(0);
  CHECK(cf_sum_rate(cfg, inst, zero) == 0.0);

  CfSolution sol(1, 1);
  sol.support.insert(0);
  sol.w[0](0) = std::sqrt(9.0);
  CHECK(cf_sum_rate(cfg, inst, sol) ==
        doctest::Approx(std::log2(1.0 + 9.0)).epsilon(1e-14));

  CfSolution empty(1, 1);  // all b = 0
  CHECK(cf_sum_rate(cfg, inst, empty) == 0.0);
}

TEST_CASE("cf_sum_rate matches the independent evaluator to 1e-12") {
  CfConfig cfg;
  cfg.num_aps = 3;
  cfg.num_ues = 2;
  cfg.antennas = 2;
  cfg.k_max = 2;
  cfg.l_max = 2;
  cfg.noise_w = 1e-12;
  RngStream rng(7, "cfrate");
  CfInstance inst = sample_cf_instance(cfg, rng);
  CfSolution sol(cfg.pairs(), cfg.antennas);
  sol.support.insert(cfg.pair_index(0, 0));
  sol.support.insert(cfg.pair_index(0, 2));
  sol.support.insert(cfg.pair_index(1, 1));
  for (int p : sol.support.chosen())
    for (int m = 0; m < cfg.antennas; ++m)
      sol.w[p](m) = 1e-5 * std::complex<double>(rng.normal(), rng.normal());
  auto terms = cf_rate_terms_oracle(cfg, inst, sol);
  double oracle = terms[0] + terms[1];
  double got = cf_sum_rate(cfg, inst, sol);
  CHECK(std::abs(got - oracle) < 1e-12 * std::max(1.0, std::abs(oracle)));
}

TEST_CASE("cf_sum_rate: non-negative and interference removal helps") {
  CfConfig cfg;
  cfg.num_aps = 2;
  cfg.num_ues = 3;
  cfg.antennas = 2;
  cfg.k_max = 3;
  cfg.l_max = 2;
  cfg.noise_w = 1e-13;
  RngStream rng(11, "cfmono");
  for (int trial = 0; trial < 20; ++trial) {
    CfInstance inst = sample_cf_instance(cfg, rng);
    CfSolution sol(cfg.pairs(), cfg.antennas);
    for (int k = 0; k < cfg.num_ues; ++k)
      sol.support.insert(cfg.pair_index(k, rng.uniform_int(cfg.num_aps)));
    for (int p : sol.support.chosen())
      for (int m = 0; m < cfg.antennas; ++m)
        sol.w[p](m) = 1e-5 * std::complex<double>(rng.normal(), rng.normal());
    double total = cf_sum_rate(cfg, inst, sol);
    CHECK(total >= 0.0);
    auto full_terms = cf_rate_terms_oracle(cfg, inst, sol);
    for (int k = 0; k < cfg.num_ues; ++k) {
      // Zero every other UE's beamformer: UE k's term cannot decrease.
      CfSolution isolated(cfg.pairs(), cfg.antennas);
      isolated.support = sol.support;
      for (int p : sol.support.chosen())
        if (cfg.ue_of(p) == k) isolated.w[p] = sol.w[p];
      auto iso_terms = cf_rate_terms_oracle(cfg, inst, isolated);
      CHECK(iso_terms[k] >= full_terms[k] - 1e-12);
    }
  }
}

TEST_CASE("cf_sum_rate: permuting UE indices leaves the total invariant") {
  CfConfig cfg;
  cfg.num_aps = 2;
  cfg.num_ues = 3;
  cfg.antennas = 2;
  cfg.k_max = 3;
  cfg.l_max = 2;
  cfg.noise_w = 1e-13;
  RngStream rng(13, "cfperm");
  CfInstance inst = sample_cf_instance(cfg, rng);
  CfSolution sol(cfg.pairs(), cfg.antennas);
  for (int k = 0; k < cfg.num_ues; ++k)
    sol.support.insert(cfg.pair_index(k, k % cfg.num_aps));
  for (int p : sol.support.chosen())
    for (int m = 0; m < cfg.antennas; ++m)
      sol.w[p](m) = 1e-5 * std::complex<double>(rng.normal(), rng.normal());
  double base = cf_sum_rate(cfg, inst, sol);

  std::vector<int> perm = {2, 0, 1};
  CfInstance pinst = inst;
  CfSolution psol(cfg.pairs(), cfg.antennas);
  for (int k = 0; k < cfg.num_ues; ++k) {
    pinst.ue_pos[perm[k]] = inst.ue_pos[k];
    for (int l = 0; l < cfg.num_aps; ++l)
      pinst.channels.col(cfg.pair_index(perm[k], l)) =
          inst.channels.col(cfg.pair_index(k, l));
  }
  for (int p : sol.support.chosen()) {
    int np = cfg.pair_index(perm[cfg.ue_of(p)], cfg.ap_of(p));
    psol.support.insert(np);
    psol.w[np] = sol.w[p];
  }
  CHECK(cf_sum_rate(cfg, pinst, psol) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("ma sampling: reference CP has zero phase") {
  MaConfig cfg;
  cfg.grid_side = 3;
  cfg.num_antennas = 2;
  cfg.num_ues = 2;
  cfg.num_paths = 5;
  RngStream rng(3, "maref");
  MaInstance inst = sample_ma_instance(cfg, rng);
  for (int k = 0; k < cfg.num_ues; ++k) {
    std::complex<double> sum{0, 0};
    for (auto e : inst.path_eta[k]) sum += e;
    CHECK(std::abs(inst.channels(k, 0) - sum) < 1e-14);
  }
}

TEST_CASE("ma sampling: channels match a path-level recomputation (unit-modulus FRV)") {
  MaConfig cfg;
  cfg.grid_side = 3;
  cfg.num_antennas = 2;
  cfg.num_ues = 2;
  cfg.num_paths = 4;
  RngStream rng(5, "marec");
  MaInstance inst = sample_ma_instance(cfg, rng);
  for (int k = 0; k < cfg.num_ues; ++k)
    for (int n = 0; n < inst.num_cps; ++n) {
      std::complex<double> h{0, 0};
      for (int lp = 0; lp < cfg.num_paths; ++lp) {
        double rho = 2.0 * M_PI / cfg.wavelength_m *
                     ((inst.cp_pos[n][0] - inst.cp_pos[0][0]) *
                          std::cos(inst.path_theta[k][lp]) *
                          std::sin(inst.path_phi[k][lp]) +
                      (inst.cp_pos[n][1] - inst.cp_pos[0][1]) *
                          std::sin(inst.path_theta[k][lp]));
        std::complex<double> frv(std::cos(rho), std::sin(rho));
        CHECK(std::abs(std::abs(frv) - 1.0) < 1e-15);
        h += inst.path_eta[k][lp] * frv;
      }
      CHECK(std::abs(h - inst.channels(k, n)) < 1e-12 * std::abs(h));
    }
}

TEST_CASE("ma sampling: translating the grid leaves channels unchanged") {
  MaConfig cfg;
  cfg.grid_side = 3;
  cfg.num_antennas = 2;
  cfg.num_ues = 1;
  cfg.num_paths = 6;
  RngStream rng(9, "matrans");
  MaInstance inst = sample_ma_instance(cfg, rng);
  const double shift_x = 1.23, shift_y = -0.45;
  for (int n = 0; n < inst.num_cps; ++n) {
    std::complex<double> h{0, 0};
    for (int lp = 0; lp < cfg.num_paths; ++lp) {
      double xn = inst.cp_pos[n][0] + shift_x, x0 = inst.cp_pos[0][0] + shift_x;
      double yn = inst.cp_pos[n][1] + shift_y, y0 = inst.cp_pos[0][1] + shift_y;
      double rho = 2.0 * M_PI / cfg.wavelength_m *
                   ((xn - x0) * std::cos(inst.path_theta[0][lp]) *
                        std::sin(inst.path_phi[0][lp]) +
                    (yn - y0) * std::sin(inst.path_theta[0][lp]));
      h += inst.path_eta[0][lp] *
           std::complex<double>(std::cos(rho), std::sin(rho));
    }
    CHECK(std::abs(h - inst.channels(0, n)) < 1e-12);
  }
}

TEST_CASE("ma sampling: elevation AoD passes a KS test against (1+sin)/2") {
  MaConfig cfg;
  cfg.grid_side = 2;
  cfg.num_antennas = 1;
  cfg.num_ues = 1;
  cfg.num_paths = 500;
  std::vector<double> thetas;
  thetas.reserve(1000000);
  for (int i = 0; i < 2000; ++i) {
    RngStream rng(500 + i, "maks");
    MaInstance inst = sample_ma_instance(cfg, rng);
    for (double th : inst.path_theta[0]) thetas.push_back(th);
  }
  std::sort(thetas.begin(), thetas.end());
  double ks = 0;
  const double n = static_cast<double>(thetas.size());
  for (size_t i = 0; i < thetas.size(); ++i) {
    double cdf = 0.5 * (1.0 + std::sin(thetas[i]));
    ks = std::max(ks, std::abs(cdf - (i + 1) / n));
    ks = std::max(ks, std::abs(cdf - i / n));
  }
  // 1% critical value 1.628 / sqrt(n).
  CHECK(ks < 1.628 / std::sqrt(n));
}

TEST_CASE("ma sampling: mean channel power matches L_p * L0 * D^-alpha") {
  MaConfig cfg;
  cfg.grid_side = 2;
  cfg.num_antennas = 1;
  cfg.num_ues = 2;
  cfg.num_paths = 16;
  double acc = 0;
  int n = 0;
  const double l0_lin = std::pow(10.0, -cfg.l0_db / 10.0);
  for (int i = 0; i < 10000; ++i) {
    RngStream rng(9000 + i, "mapow");
    MaInstance inst = sample_ma_instance(cfg, rng);
    for (int k = 0; k < cfg.num_ues; ++k) {
      double expect =
          cfg.num_paths * l0_lin * std::pow(inst.ue_dist[k], -cfg.alpha);
      acc += std::norm(inst.channels(k, 0)) / expect;
      n += 1;
    }
  }
  CHECK(std::abs(acc / n - 1.0) < 0.03);
}

TEST_CASE("selected_channel contract") {
  MaConfig cfg;
  cfg.grid_side = 3;
  cfg.num_antennas = 3;
  cfg.num_ues = 2;
  RngStream rng(21, "masel");
  MaInstance inst = sample_ma_instance(cfg, rng);

  SUBCASE("single antenna is the scalar channel") {
    SupportSet s(9);
    s.insert(5);
    CMat h = selected_channel(inst, s, 1);
    CHECK(h(0, 0) == inst.channels(0, 5));
  }
  SUBCASE("insertion order does not matter (index-sorted output)") {
    SupportSet a(9), b(9);
    a.insert(7);
    a.insert(2);
    a.insert(4);
    b.insert(2);
    b.insert(4);
    b.insert(7);
    CHECK(selected_channel(inst, a, 3) == selected_channel(inst, b, 3));
  }
  SUBCASE("wrong cardinality throws") {
    SupportSet s(9);
    s.insert(0);
    CHECK_THROWS_AS(selected_channel(inst, s, 3), ShapeError);
  }
  SUBCASE("rate is invariant to ordering convention with matched beamformers") {
    SupportSet a(9), b(9);
    a.insert(7);
    a.insert(2);
    a.insert(4);
    b.insert(4);
    b.insert(7);
    b.insert(2);
    MaSolution sol_a(9, cfg.num_ues, 3), sol_b(9, cfg.num_ues, 3);
    sol_a.support = a;
    sol_b.support = b;
    for (int k = 0; k < cfg.num_ues; ++k)
      for (int m = 0; m < 3; ++m) {
        std::complex<double> w(rng.normal(), rng.normal());
        sol_a.w[k](m) = w * 1e-5;
        sol_b.w[k](m) = w * 1e-5;  // same ordering contract on both sides
      }
    CHECK(ma_sum_rate(cfg, inst, sol_a) ==
          doctest::Approx(ma_sum_rate(cfg, inst, sol_b)).epsilon(1e-14));
  }
}

TEST_CASE("ma_sum_rate: trivials and independent evaluator") {
  MaConfig cfg;
  cfg.grid_side = 3;
  cfg.num_antennas = 2;
  cfg.num_ues = 2;
  cfg.noise_w = 1e-13;
  RngStream rng(31, "marate");
  MaInstance inst = sample_ma_instance(cfg, rng);
  MaSolution sol(9, cfg.num_ues, 2);
  sol.support.insert(1);
  sol.support.insert(6);

  SUBCASE("all-zero beamformers give zero rate") {
    CHECK(ma_sum_rate(cfg, inst, sol) == 0.0);
  }
  SUBCASE("K = 1 closed form") {
    MaConfig c1 = cfg;
    c1.num_ues = 1;
    RngStream r1(32, "marate1");
    MaInstance i1 = sample_ma_instance(c1, r1);
    MaSolution s1(9, 1, 2);
    s1.support.insert(1);
    s1.support.insert(6);
    CMat h = selected_channel(i1, s1.support, 2);
    s1.w[0] = std::sqrt(c1.p_max_w) * h.row(0).transpose() / h.row(0).norm();
    double expect =
        std::log2(1.0 + c1.p_max_w * h.row(0).squaredNorm() / c1.noise_w);
    CHECK(ma_sum_rate(c1, i1, s1) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("random K = 2 matches the oracle to 1e-12") {
    for (int m = 0; m < 2; ++m)
      for (int k = 0; k < 2; ++k)
        sol.w[k](m) = 1e-4 * std::complex<double>(rng.normal(), rng.normal());
    double oracle = ma_rate_oracle(cfg, inst, sol);
    CHECK(std::abs(ma_sum_rate(cfg, inst, sol) - oracle) <
          1e-12 * std::max(1.0, oracle));
  }
}
