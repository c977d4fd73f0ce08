#include "mdra/baselines.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdra {

SupportSet greedy_association(const CfConfig& cfg, const CfInstance& inst) {
  SupportSet support(cfg.pairs());
  std::vector<int> ap_load(cfg.num_aps, 0);
  for (int k = 0; k < cfg.num_ues; ++k) {
    std::vector<int> order(cfg.num_aps);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return inst.channel(k, a).squaredNorm() > inst.channel(k, b).squaredNorm();
    });
    int taken = 0;
    for (int l : order) {
      if (taken >= cfg.l_max) break;
      if (ap_load[l] >= cfg.k_max) continue;  // saturated: next strongest
      support.insert(cfg.pair_index(k, l));
      ap_load[l] += 1;
      taken += 1;
    }
  }
  return support;
}

SupportSet greedy_positioning(const MaConfig& cfg, const MaInstance& inst) {
  FeasibilityOracle oracle = ma_constraint_oracle(cfg, inst.cp_pos);
  std::vector<double> score(inst.num_cps, 0.0);
  for (int n = 0; n < inst.num_cps; ++n) {
    double s = 0;
    for (int k = 0; k < inst.num_ues; ++k) s += std::norm(inst.channels(k, n));
    score[n] = s / inst.num_ues;
  }
  DecodingState state(inst.num_cps);
  for (int t = 0; t < cfg.num_antennas; ++t) {
    std::vector<int> infeasible = infeasible_candidates(state, oracle);
    int best = -1;
    for (int n = 0; n < inst.num_cps; ++n) {
      if (state.support.contains(n)) continue;
      if (std::binary_search(infeasible.begin(), infeasible.end(), n)) continue;
      if (best < 0 || score[n] > score[best]) best = n;
    }
    if (best < 0)
      throw DeadEndError("greedy_positioning: no feasible CP at step " +
                         std::to_string(t + 1));
    state.support.insert(best);
  }
  return state.support;
}

SupportSet random_positioning(const MaConfig& cfg, const MaInstance& inst,
                              RngStream& rng) {
  FeasibilityOracle oracle = ma_constraint_oracle(cfg, inst.cp_pos);
  constexpr int kBudget = 100000;
  std::vector<int> pool(inst.num_cps);
  for (int attempt = 0; attempt < kBudget; ++attempt) {
    std::iota(pool.begin(), pool.end(), 0);
    SupportSet support(inst.num_cps);
    for (int t = 0; t < cfg.num_antennas; ++t) {
      int j = t + rng.uniform_int(inst.num_cps - t);
      std::swap(pool[t], pool[j]);
      support.insert(pool[t]);
    }
    if (oracle.feasible_final(assignment_from_support(support))) return support;
  }
  throw BudgetError("random_positioning: rejection budget exhausted");
}

// ---------------------------------------------------------------------------
// WMMSE, single power budget.
// ---------------------------------------------------------------------------

namespace {

double sum_rate_flat(const std::vector<CVec>& h, const std::vector<CVec>& w,
                     double noise) {
  double rate = 0;
  const int k_n = static_cast<int>(h.size());
  for (int k = 0; k < k_n; ++k) {
    double sig = std::norm(h[k].dot(w[k]));
    double intf = 0;
    for (int j = 0; j < k_n; ++j)
      if (j != k) intf += std::norm(h[k].dot(w[j]));
    rate += std::log2(1.0 + sig / (intf + noise));
  }
  return rate;
}

/// Solves (A + mu I) w_k = b_k for all k and returns total power.
double solve_total_power(const CMat& a, const CMat& b, double mu,
                         CMat* w_out) {
  CMat reg = a;
  reg.diagonal().array() += mu;
  Eigen::LDLT<CMat> ldlt(reg);
  *w_out = ldlt.solve(b);
  return w_out->squaredNorm();
}

}  // namespace

WmmseResult wmmse_per_bs(const std::vector<CVec>& h, double p_max, double noise,
                         const WmmseConfig& cfg) {
  const int k_n = static_cast<int>(h.size());
  if (k_n == 0) throw ShapeError("wmmse_per_bs: no users");
  const int m = static_cast<int>(h[0].size());
  WmmseResult res;
  res.w.assign(k_n, CVec::Zero(m));
  // MRT equal-power start.
  for (int k = 0; k < k_n; ++k) {
    double nh = h[k].norm();
    if (nh > 0) res.w[k] = std::sqrt(p_max / k_n) * h[k] / nh;
  }
  double prev_rate = sum_rate_flat(h, res.w, noise);
  res.rate_per_iter.push_back(prev_rate);
  for (int it = 0; it < cfg.max_iters; ++it) {
    // Receiver and MMSE-weight updates.
    std::vector<std::complex<double>> u(k_n);
    std::vector<double> v(k_n);
    for (int k = 0; k < k_n; ++k) {
      double denom = noise;
      for (int j = 0; j < k_n; ++j) denom += std::norm(h[k].dot(res.w[j]));
      std::complex<double> z = h[k].dot(res.w[k]);
      u[k] = z / denom;
      double e = 1.0 - std::norm(z) / denom;
      v[k] = 1.0 / std::max(e, 1e-300);
    }
    // Beamformer update under the power budget.
    CMat a = CMat::Zero(m, m);
    CMat b = CMat::Zero(m, k_n);
    for (int k = 0; k < k_n; ++k) {
      a += v[k] * std::norm(u[k]) * (h[k] * h[k].adjoint());
      b.col(k) = v[k] * u[k] * h[k];
    }
    CMat w_mat;
    if (b.norm() == 0.0) {
      w_mat = CMat::Zero(m, k_n);
    } else {
      double p0 = solve_total_power(a, b, 0.0, &w_mat);
      if (!(p0 <= p_max) || !w_mat.allFinite()) {
        double lo = 0.0, hi = 1e-12;
        while (solve_total_power(a, b, hi, &w_mat) > p_max) hi *= 2.0;
        for (int bi = 0; bi < 100; ++bi) {
          double mid = 0.5 * (lo + hi);
          double p = solve_total_power(a, b, mid, &w_mat);
          (p > p_max ? lo : hi) = mid;
        }
        solve_total_power(a, b, hi, &w_mat);
      }
    }
    for (int k = 0; k < k_n; ++k) res.w[k] = w_mat.col(k);
    double rate = sum_rate_flat(h, res.w, noise);
    res.rate_per_iter.push_back(rate);
    if (std::abs(rate - prev_rate) < cfg.tol) break;
    prev_rate = rate;
  }
  return res;
}

// ---------------------------------------------------------------------------
// WMMSE, per-AP power constraints for a fixed cell-free association.
// ---------------------------------------------------------------------------

namespace {

struct CfWmmseWork {
  std::vector<std::vector<int>> serving;   // serving[k]: sorted APs of UE k
  std::vector<CMat> h_on;  // h_on[j]: (|S_j| M) x K, col k = h_k over S_j
  std::vector<CMat> g;     // quadratic term per UE j
  std::vector<CVec> b;     // linear term per UE j
  std::vector<CVec> w;     // stacked beamformer per UE j
};

void cf_solve_ue(CfWmmseWork& wk, int j, const std::vector<double>& mu, int m) {
  const auto& aps = wk.serving[j];
  if (aps.empty()) return;
  CMat reg = wk.g[j];
  for (size_t bi = 0; bi < aps.size(); ++bi)
    for (int i = 0; i < m; ++i)
      reg(static_cast<Eigen::Index>(bi) * m + i,
          static_cast<Eigen::Index>(bi) * m + i) += mu[aps[bi]];
  wk.w[j] = Eigen::LDLT<CMat>(reg).solve(wk.b[j]);
}

double cf_ap_power(const CfWmmseWork& wk, int l, int m) {
  double p = 0;
  for (size_t j = 0; j < wk.serving.size(); ++j) {
    const auto& aps = wk.serving[j];
    for (size_t bi = 0; bi < aps.size(); ++bi)
      if (aps[bi] == l)
        p += wk.w[j].segment(static_cast<Eigen::Index>(bi) * m, m).squaredNorm();
  }
  return p;
}

}  // namespace

CfWmmseResult wmmse_cf(const CfConfig& cfg, const CfInstance& inst,
                       const SupportSet& support, const WmmseConfig& wcfg) {
  const int k_n = cfg.num_ues, l_n = cfg.num_aps, m = cfg.antennas;
  CfWmmseResult res{CfSolution(cfg.pairs(), m), {}};
  res.solution.support = support;

  CfWmmseWork wk;
  wk.serving.resize(k_n);
  for (int p : support.sorted()) wk.serving[cfg.ue_of(p)].push_back(cfg.ap_of(p));
  wk.h_on.resize(k_n);
  wk.g.resize(k_n);
  wk.b.resize(k_n);
  wk.w.resize(k_n);
  bool any = false;
  for (int j = 0; j < k_n; ++j) {
    int dim = static_cast<int>(wk.serving[j].size()) * m;
    wk.h_on[j] = CMat(dim, k_n);
    for (int k = 0; k < k_n; ++k)
      for (size_t bi = 0; bi < wk.serving[j].size(); ++bi)
        wk.h_on[j].block(static_cast<Eigen::Index>(bi) * m, k, m, 1) =
            inst.channel(k, wk.serving[j][bi]);
    wk.w[j] = CVec::Zero(dim);
    any |= dim > 0;
  }
  if (!any) {
    res.rate_per_iter.push_back(0.0);
    return res;
  }

  // Equal power split per AP over its served UEs, MRT directions.
  std::vector<int> load(l_n, 0);
  for (int j = 0; j < k_n; ++j)
    for (int l : wk.serving[j]) load[l] += 1;
  for (int j = 0; j < k_n; ++j)
    for (size_t bi = 0; bi < wk.serving[j].size(); ++bi) {
      int l = wk.serving[j][bi];
      CVec hj = inst.channel(j, l);
      if (hj.norm() > 0)
        wk.w[j].segment(static_cast<Eigen::Index>(bi) * m, m) =
            std::sqrt(cfg.p_max_w / load[l]) * hj / hj.norm();
    }

  auto assemble = [&]() {
    for (int j = 0; j < k_n; ++j)
      for (size_t bi = 0; bi < wk.serving[j].size(); ++bi)
        res.solution.w[cfg.pair_index(j, wk.serving[j][bi])] =
            wk.w[j].segment(static_cast<Eigen::Index>(bi) * m, m);
  };
  assemble();
  double prev_rate = cf_sum_rate(cfg, inst, res.solution);
  res.rate_per_iter.push_back(prev_rate);

  std::vector<double> mu(l_n, 0.0);
  const double p_tol = 1e-12 * cfg.p_max_w;
  for (int it = 0; it < wcfg.max_iters; ++it) {
    // u, v from the current beamformers.
    std::vector<std::complex<double>> u(k_n);
    std::vector<double> v(k_n);
    for (int k = 0; k < k_n; ++k) {
      double denom = cfg.noise_w;
      std::complex<double> zkk{0.0, 0.0};
      for (int j = 0; j < k_n; ++j) {
        if (wk.serving[j].empty()) continue;
        std::complex<double> z = wk.h_on[j].col(k).dot(wk.w[j]);
        denom += std::norm(z);
        if (j == k) zkk = z;
      }
      u[k] = zkk / denom;
      v[k] = 1.0 / std::max(1.0 - std::norm(zkk) / denom, 1e-300);
    }
    for (int j = 0; j < k_n; ++j) {
      if (wk.serving[j].empty()) continue;
      int dim = static_cast<int>(wk.serving[j].size()) * m;
      wk.g[j] = CMat::Zero(dim, dim);
      for (int k = 0; k < k_n; ++k)
        wk.g[j] += v[k] * std::norm(u[k]) *
                   (wk.h_on[j].col(k) * wk.h_on[j].col(k).adjoint());
      wk.b[j] = v[j] * u[j] * wk.h_on[j].col(j);
    }
    // Dual coordinate sweeps: drive each AP's power to its budget.
    for (int j = 0; j < k_n; ++j) cf_solve_ue(wk, j, mu, m);
    for (int sweep = 0; sweep < 40; ++sweep) {
      double worst = 0;
      for (int l = 0; l < l_n; ++l) {
        if (load[l] == 0) continue;
        double p = cf_ap_power(wk, l, m);
        auto power_at = [&](double val) {
          double saved = mu[l];
          mu[l] = val;
          for (int j = 0; j < k_n; ++j)
            if (std::find(wk.serving[j].begin(), wk.serving[j].end(), l) !=
                wk.serving[j].end())
              cf_solve_ue(wk, j, mu, m);
          double out = cf_ap_power(wk, l, m);
          (void)saved;
          return out;
        };
        if (p > cfg.p_max_w + p_tol) {
          double lo = mu[l], hi = std::max(mu[l], 1e-12);
          while (power_at(hi) > cfg.p_max_w) hi *= 2.0;
          for (int bi = 0; bi < 80; ++bi) {
            double mid = 0.5 * (lo + hi);
            (power_at(mid) > cfg.p_max_w ? lo : hi) = mid;
          }
          power_at(hi);
        } else if (mu[l] > 0 && p < cfg.p_max_w - p_tol) {
          // Multiplier too large; relax toward complementary slackness.
          double mu_old = mu[l];
          if (power_at(0.0) > cfg.p_max_w) {
            double lo = 0.0, hi = mu_old;
            for (int bi = 0; bi < 80; ++bi) {
              double mid = 0.5 * (lo + hi);
              (power_at(mid) > cfg.p_max_w ? lo : hi) = mid;
            }
            power_at(hi);
          }
        }
      }
      for (int l = 0; l < l_n; ++l) {
        if (load[l] == 0) continue;
        double pw = cf_ap_power(wk, l, m);
        worst = std::max(worst, pw - cfg.p_max_w);
        if (mu[l] > 0) worst = std::max(worst, cfg.p_max_w - pw);  // slackness
      }
      if (worst <= p_tol) break;
    }
    // Defensive exact-feasibility scaling (bisection residue only).
    for (int l = 0; l < l_n; ++l) {
      if (load[l] == 0) continue;
      double p = cf_ap_power(wk, l, m);
      if (p > cfg.p_max_w) {
        double s = std::sqrt(cfg.p_max_w / p);
        for (int j = 0; j < k_n; ++j) {
          const auto& aps = wk.serving[j];
          for (size_t bi = 0; bi < aps.size(); ++bi)
            if (aps[bi] == l)
              wk.w[j].segment(static_cast<Eigen::Index>(bi) * m, m) *= s;
        }
      }
    }
    assemble();
    double rate = cf_sum_rate(cfg, inst, res.solution);
    res.rate_per_iter.push_back(rate);
    if (std::abs(rate - prev_rate) < wcfg.tol) break;
    prev_rate = rate;
  }
  return res;
}

std::vector<CVec> zf_beamform(const std::vector<CVec>& h, double p_max) {
  const int k_n = static_cast<int>(h.size());
  if (k_n == 0) throw ShapeError("zf_beamform: no users");
  const int m = static_cast<int>(h[0].size());
  if (m < k_n) throw NumericalError("zf_beamform: M < K");
  CMat hm(k_n, m);
  for (int k = 0; k < k_n; ++k) hm.row(k) = h[k].adjoint();
  CMat gram = hm * hm.adjoint();
  Eigen::FullPivLU<CMat> lu(gram);
  if (lu.rank() < k_n)
    throw NumericalError("zf_beamform: rank-deficient channel matrix");
  CMat pinv = hm.adjoint() * lu.inverse();  // M x K
  std::vector<CVec> w(k_n);
  for (int k = 0; k < k_n; ++k) {
    CVec col = pinv.col(k);
    w[k] = std::sqrt(p_max / k_n) * col / col.norm();
  }
  return w;
}

MaSolution solve_ma_wmmse(const MaConfig& cfg, const MaInstance& inst,
                          const SupportSet& support, const WmmseConfig& wcfg) {
  CMat h_sel = selected_channel(inst, support, cfg.num_antennas);
  std::vector<CVec> h(cfg.num_ues);
  for (int k = 0; k < cfg.num_ues; ++k) h[k] = h_sel.row(k).transpose();
  WmmseResult r = wmmse_per_bs(h, cfg.p_max_w, cfg.noise_w, wcfg);
  MaSolution sol(support.universe(), cfg.num_ues, cfg.num_antennas);
  sol.support = support;
  sol.w = r.w;
  return sol;
}

MaSolution solve_ma_zf(const MaConfig& cfg, const MaInstance& inst,
                       const SupportSet& support) {
  CMat h_sel = selected_channel(inst, support, cfg.num_antennas);
  std::vector<CVec> h(cfg.num_ues);
  for (int k = 0; k < cfg.num_ues; ++k) h[k] = h_sel.row(k).transpose();
  MaSolution sol(support.universe(), cfg.num_ues, cfg.num_antennas);
  sol.support = support;
  sol.w = zf_beamform(h, cfg.p_max_w);
  return sol;
}

namespace {

BruteForceResult best_of(const std::vector<SupportSet>& supports,
                         const std::function<double(const SupportSet&)>& solve,
                         int universe) {
  BruteForceResult res{SupportSet(universe), -1.0, 0};
  for (const auto& s : supports) {
    double rate = solve(s);
    res.evaluated += 1;
    if (rate > res.rate) {
      res.rate = rate;
      res.best = s;
    }
  }
  return res;
}

}  // namespace

BruteForceResult brute_force_joint_ma(
    const MaConfig& cfg, const MaInstance& inst, const FeasibilityOracle& oracle,
    const std::function<double(const SupportSet&)>& solve_rate, int budget) {
  std::vector<SupportSet> all =
      enumerate_feasible_supports(oracle, inst.num_cps, cfg.num_antennas);
  if (static_cast<int>(all.size()) > budget)
    throw BudgetError("brute_force_joint_ma: feasible-support budget exceeded");
  if (all.empty())
    throw BudgetError("brute_force_joint_ma: no feasible support");
  return best_of(all, solve_rate, inst.num_cps);
}

BruteForceResult brute_force_joint_cf(
    const CfConfig& cfg, const CfInstance& inst, const FeasibilityOracle& oracle,
    const std::function<double(const SupportSet&)>& solve_rate, int budget) {
  (void)inst;
  std::vector<SupportSet> all;
  for (int t = 0; t <= cfg.support_bound(); ++t) {
    auto part = enumerate_feasible_supports(oracle, cfg.pairs(), t);
    for (auto& s : part) all.push_back(std::move(s));
    if (static_cast<int>(all.size()) > budget)
      throw BudgetError("brute_force_joint_cf: feasible-support budget exceeded");
  }
  return best_of(all, solve_rate, cfg.pairs());
}

}  // namespace mdra
