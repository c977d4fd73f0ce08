#include "mdra/cvln.hpp"

#include <algorithm>
#include <cmath>

namespace mdra {

namespace {

Tensor cf_channel_features(const CfInstance& inst, double scale) {
  int pairs = inst.num_ues * inst.num_aps;
  int m = inst.antennas;
  Tensor t(pairs, 2 * m);
  for (int p = 0; p < pairs; ++p)
    for (int i = 0; i < m; ++i) {
      std::complex<double> h = inst.channels(i, p) / scale;
      t.at(p, i) = h.real();
      t.at(p, m + i) = h.imag();
    }
  return t;
}

Tape::Id typed_apply(Tape& tape, const Mlp& assoc_mlp, const Mlp& cand_mlp,
                     Tape::Id input, const std::vector<int>& assoc_rows,
                     const std::vector<int>& cand_rows, int total_rows,
                     const ParamStore& store, bool training, BnBatchStats* bn) {
  Tape::Id out = -1;
  if (!assoc_rows.empty()) {
    Tape::Id part = assoc_mlp.apply(tape, tape.gather_rows(input, assoc_rows),
                                    store, training, bn);
    out = tape.scatter_rows(part, assoc_rows, total_rows);
  }
  if (!cand_rows.empty()) {
    Tape::Id part = cand_mlp.apply(tape, tape.gather_rows(input, cand_rows),
                                   store, training, bn);
    Tape::Id sc = tape.scatter_rows(part, cand_rows, total_rows);
    out = out < 0 ? sc : tape.add(out, sc);
  }
  return out;
}

/// SINR chain shared by both rate nodes: P is the K x K pair power matrix.
Tape::Id sum_rate_from_pair_power(Tape& tape, Tape::Id p, int k, double noise) {
  Tensor eye(k, k);
  for (int i = 0; i < k; ++i) eye.at(i, i) = 1.0;
  Tape::Id diag = tape.row_sums(tape.mul(p, tape.constant(std::move(eye))));
  Tape::Id interference = tape.sub(tape.row_sums(p), diag);
  Tape::Id denom =
      tape.add(interference, tape.constant(Tensor::filled(k, 1, noise)));
  Tape::Id sinr = tape.div(diag, denom);
  Tape::Id log_term = tape.log_(tape.scale_shift(sinr, 1.0, 1.0));
  return tape.sum_all(tape.scale_shift(log_term, 1.0 / std::log(2.0), 0.0));
}

}  // namespace

// ---------------------------------------------------------------------------
// CfCvln
// ---------------------------------------------------------------------------

CfCvln::CfCvln(CfConfig cfg, CvlnHyper hp) : cfg_(std::move(cfg)), hp_(hp) {
  const int d = hp_.d;
  const int hid = hp_.mlp_hidden;
  auto bnmlp = [&](const std::string& name, int in, int out) {
    return Mlp("cf.cvln." + name, MlpSpec::with_batchnorm(in, hid, out));
  };
  init_assoc_ = bnmlp("init_assoc", 2 * cfg_.antennas, d);
  init_cand_ = bnmlp("init_cand", 2 * cfg_.antennas, d);
  for (int l = 0; l < hp_.layers; ++l) {
    std::string p = "l" + std::to_string(l) + ".";
    Layer layer;
    layer.msg_to_ue_assoc = bnmlp(p + "msg_to_ue_assoc", 2 * d, d);
    layer.msg_to_ue_cand = bnmlp(p + "msg_to_ue_cand", 2 * d, d);
    layer.msg_to_ap_assoc = bnmlp(p + "msg_to_ap_assoc", 2 * d, d);
    layer.msg_to_ap_cand = bnmlp(p + "msg_to_ap_cand", 2 * d, d);
    layer.ue_update = bnmlp(p + "ue_update", 2 * d, d);
    layer.ap_update = bnmlp(p + "ap_update", 2 * d, d);
    layer.edge_assoc = bnmlp(p + "edge_assoc", 3 * d, d);
    layer.edge_cand = bnmlp(p + "edge_cand", 3 * d, d);
    layers_.push_back(std::move(layer));
  }
  head_ = Mlp("cf.cvln.head", MlpSpec::linear(d, 2 * cfg_.antennas));
}

void CfCvln::init_params(ParamStore& store, RngStream& rng) const {
  init_assoc_.init_params(store, rng);
  init_cand_.init_params(store, rng);
  for (const auto& l : layers_) {
    l.msg_to_ue_assoc.init_params(store, rng);
    l.msg_to_ue_cand.init_params(store, rng);
    l.msg_to_ap_assoc.init_params(store, rng);
    l.msg_to_ap_cand.init_params(store, rng);
    l.ue_update.init_params(store, rng);
    l.ap_update.init_params(store, rng);
    l.edge_assoc.init_params(store, rng);
    l.edge_cand.init_params(store, rng);
  }
  head_.init_params(store, rng);
}

Tape::Id CfCvln::emit(Tape& tape, const CfInstance& inst,
                      const SupportSet& support, const ParamStore& store,
                      double input_scale, bool training, BnBatchStats* bn) const {
  const int k = cfg_.num_ues, l = cfg_.num_aps, d = hp_.d;
  const int pairs = cfg_.pairs();
  std::vector<int> assoc, cand;
  for (int p = 0; p < pairs; ++p)
    (support.contains(p) ? assoc : cand).push_back(p);

  Tape::Id feats = tape.constant(cf_channel_features(inst, input_scale));
  Tape::Id edge = typed_apply(tape, init_assoc_, init_cand_, feats, assoc, cand,
                              pairs, store, training, bn);
  Tape::Id f_ue = tape.constant(Tensor::zeros(k, d));
  Tape::Id f_ap = tape.constant(Tensor::zeros(l, d));
  for (const auto& layer : layers_) {
    Tape::Id ap_e = tape.tile_rows(f_ap, k);
    Tape::Id g = typed_apply(tape, layer.msg_to_ue_assoc, layer.msg_to_ue_cand,
                             tape.concat_cols({ap_e, edge}), assoc, cand, pairs,
                             store, training, bn);
    Tape::Id f_ue_new = layer.ue_update.apply(
        tape, tape.concat_cols({f_ue, tape.group_mean_rows(g, k)}), store,
        training, bn);
    Tape::Id ue_e = tape.repeat_each_row(f_ue, l);
    Tape::Id nmsg = typed_apply(tape, layer.msg_to_ap_assoc,
                                layer.msg_to_ap_cand,
                                tape.concat_cols({ue_e, edge}), assoc, cand,
                                pairs, store, training, bn);
    Tape::Id f_ap_new = layer.ap_update.apply(
        tape, tape.concat_cols({f_ap, tape.group_mean_strided(nmsg, l)}), store,
        training, bn);
    Tape::Id e_in = tape.concat_cols({edge, tape.repeat_each_row(f_ue_new, l),
                                      tape.tile_rows(f_ap_new, k)});
    edge = typed_apply(tape, layer.edge_assoc, layer.edge_cand, e_in, assoc,
                       cand, pairs, store, training, bn);
    f_ue = f_ue_new;
    f_ap = f_ap_new;
  }
  Tape::Id w_raw = head_.apply(tape, edge, store, training, bn);

  // Projection onto the per-AP power constraints (multiplicative b-gating).
  DiscreteAssignment b = assignment_from_support(support);
  Tensor sel(l, pairs);  // sel[l, (k,l)] = b_kl
  Tensor expand(pairs, l);
  for (int ik = 0; ik < k; ++ik)
    for (int il = 0; il < l; ++il) {
      int p = cfg_.pair_index(ik, il);
      sel.at(il, p) = b.bits[p];
      expand.at(p, il) = b.bits[p];
    }
  Tape::Id row_sq = tape.row_sums(tape.square(w_raw));  // ||w_kl||^2 per row
  Tape::Id ap_power = tape.matmul(tape.constant(std::move(sel)), row_sq);
  Tape::Id clamped = tape.max_const(ap_power, cfg_.p_max_w);
  Tape::Id scale = tape.div(
      tape.constant(Tensor::filled(l, 1, std::sqrt(cfg_.p_max_w))),
      tape.sqrt_(clamped));
  Tape::Id row_scale = tape.matmul(tape.constant(std::move(expand)), scale);
  return tape.mul_colvec(w_raw, row_scale);
}

Tape::Id cf_rate_node(Tape& tape, const CfConfig& cfg, const CfInstance& inst,
                      const SupportSet& support, Tape::Id w) {
  PairPowerSpec spec;
  spec.K = cfg.num_ues;
  spec.S = cfg.num_ues;
  spec.L = cfg.num_aps;
  spec.M = cfg.antennas;
  spec.h.resize(static_cast<size_t>(spec.K) * spec.L * spec.M);
  for (int k = 0; k < spec.K; ++k)
    for (int l = 0; l < spec.L; ++l)
      for (int m = 0; m < spec.M; ++m)
        spec.h[(static_cast<size_t>(k) * spec.L + l) * spec.M + m] =
            inst.channels(m, cfg.pair_index(k, l));
  DiscreteAssignment b = assignment_from_support(support);
  spec.gate.assign(b.bits.begin(), b.bits.end());
  Tape::Id p = tape.pair_power(w, std::move(spec));
  return sum_rate_from_pair_power(tape, p, cfg.num_ues, cfg.noise_w);
}

CfSolution cf_solution_from_node(const Tape& tape, Tape::Id w,
                                 const CfConfig& cfg,
                                 const SupportSet& support) {
  const Tensor& W = tape.value(w);
  CfSolution sol(cfg.pairs(), cfg.antennas);
  sol.support = support;
  for (int p = 0; p < cfg.pairs(); ++p)
    for (int m = 0; m < cfg.antennas; ++m)
      sol.w[p](m) = std::complex<double>(W.at(p, m), W.at(p, cfg.antennas + m));
  return sol;
}

// ---------------------------------------------------------------------------
// MaCvln
// ---------------------------------------------------------------------------

MaCvln::MaCvln(MaConfig cfg, CvlnHyper hp) : cfg_(std::move(cfg)), hp_(hp) {
  const int d = hp_.d;
  const int hid = hp_.mlp_hidden;
  edge_init_ = Mlp("ma.cvln.edge_init", MlpSpec::relu_only(2, hid, d));
  for (int l = 0; l < hp_.layers; ++l)
    layers_.emplace_back("ma.cvln.l" + std::to_string(l), d, hid, false);
  head_ = Mlp("ma.cvln.head", MlpSpec::linear(d, 2));
}

void MaCvln::init_params(ParamStore& store, RngStream& rng) const {
  edge_init_.init_params(store, rng);
  for (const auto& l : layers_) l.init_params(store, rng);
  head_.init_params(store, rng);
}

MaCvln::Emit MaCvln::emit(Tape& tape, const MaInstance& inst,
                          const SupportSet& support, const ParamStore& store,
                          double input_scale, bool training,
                          BnBatchStats* bn) const {
  const int k = cfg_.num_ues, m = cfg_.num_antennas, d = hp_.d;
  CMat h_sel = selected_channel(inst, support, m);
  // Edge rows UE-major: row = k * M + m.
  Tensor feats(k * m, 2);
  for (int ik = 0; ik < k; ++ik)
    for (int im = 0; im < m; ++im) {
      std::complex<double> h = h_sel(ik, im) / input_scale;
      feats.at(ik * m + im, 0) = h.real();
      feats.at(ik * m + im, 1) = h.imag();
    }
  Tape::Id edge = edge_init_.apply(tape, tape.constant(std::move(feats)), store,
                                   training, bn);
  Tape::Id tx = tape.constant(Tensor::zeros(k, d));  // UE nodes
  Tape::Id rx = tape.constant(Tensor::zeros(m, d));  // MA nodes
  for (const auto& layer : layers_) {
    auto out = layer.apply(tape, tx, rx, edge, k, m, store, training, bn);
    tx = out.tx;
    rx = out.rx;
    edge = out.edge;
  }
  Tape::Id heads = head_.apply(tape, tx, store, training, bn);  // K x 2
  Tape::Id mu = tape.scale_shift(
      tape.softmax(tape.slice_cols(heads, 0, 1)), cfg_.p_max_w, 0.0);
  Tape::Id p = tape.scale_shift(tape.softmax(tape.slice_cols(heads, 1, 2)),
                                cfg_.p_max_w, 0.0);

  MuSolveSpec spec;
  spec.M = m;
  spec.K = k;
  spec.sigma2 = cfg_.noise_w;
  spec.h.resize(static_cast<size_t>(k) * m);
  for (int ik = 0; ik < k; ++ik)
    for (int im = 0; im < m; ++im)
      spec.h[static_cast<size_t>(ik) * m + im] = h_sel(ik, im);
  Tape::Id dirs = tape.mu_solve_dirs(mu, std::move(spec));  // K x 2M
  Tape::Id norms = tape.sqrt_(tape.row_sums(tape.square(dirs)));
  Tape::Id inv_norm = tape.div(tape.constant(Tensor::ones(k, 1)), norms);
  Tape::Id unit = tape.mul_colvec(dirs, inv_norm);
  Tape::Id w = tape.mul_colvec(unit, tape.sqrt_(p));
  return {w, p, mu};
}

Tape::Id ma_rate_node(Tape& tape, const MaConfig& cfg, const MaInstance& inst,
                      const SupportSet& support, Tape::Id w) {
  CMat h_sel = selected_channel(inst, support, cfg.num_antennas);
  PairPowerSpec spec;
  spec.K = cfg.num_ues;
  spec.S = cfg.num_ues;
  spec.L = 1;
  spec.M = cfg.num_antennas;
  spec.h.resize(static_cast<size_t>(spec.K) * spec.M);
  for (int k = 0; k < spec.K; ++k)
    for (int m = 0; m < spec.M; ++m)
      spec.h[static_cast<size_t>(k) * spec.M + m] = h_sel(k, m);
  spec.gate.assign(spec.S, 1.0);
  Tape::Id p = tape.pair_power(w, std::move(spec));
  return sum_rate_from_pair_power(tape, p, cfg.num_ues, cfg.noise_w);
}

MaSolution ma_solution_from_node(const Tape& tape, Tape::Id w,
                                 const MaConfig& cfg,
                                 const SupportSet& support) {
  const Tensor& W = tape.value(w);
  MaSolution sol(support.universe(), cfg.num_ues, cfg.num_antennas);
  sol.support = support;
  for (int k = 0; k < cfg.num_ues; ++k)
    for (int m = 0; m < cfg.num_antennas; ++m)
      sol.w[k](m) =
          std::complex<double>(W.at(k, m), W.at(k, cfg.num_antennas + m));
  return sol;
}

SupportSet random_feasible_support(const FeasibilityOracle& oracle,
                                   int universe, int target_cardinality,
                                   RngStream& rng) {
  if (target_cardinality < 0 || target_cardinality > universe)
    throw ShapeError("random_feasible_support: bad cardinality");
  constexpr int kRestartBudget = 10000;
  for (int attempt = 0; attempt < kRestartBudget; ++attempt) {
    DecodingState state(universe);
    bool stuck = false;
    for (int t = 0; t < target_cardinality; ++t) {
      std::vector<int> infeasible = infeasible_candidates(state, oracle);
      std::vector<int> options;
      for (int n = 0; n < universe; ++n) {
        if (state.support.contains(n)) continue;
        if (!std::binary_search(infeasible.begin(), infeasible.end(), n))
          options.push_back(n);
      }
      if (options.empty()) {
        stuck = true;
        break;
      }
      state.support.insert(options[rng.uniform_int(
          static_cast<int>(options.size()))]);
    }
    if (!stuck) return state.support;
  }
  throw BudgetError("random_feasible_support: rejection budget exhausted");
}

}  // namespace mdra
