#include "mdra/dvln.hpp"

#include <algorithm>

namespace mdra {

namespace {

/// Channels of one CF instance as stacked (re, im) rows, pair-major, divided
/// by the input scale.
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

/// CP coordinates in wavelength units.
Tensor ma_coord_features(const MaInstance& inst, double wavelength) {
  Tensor t(inst.num_cps, 2);
  for (int n = 0; n < inst.num_cps; ++n) {
    t.at(n, 0) = inst.cp_pos[n][0] / wavelength;
    t.at(n, 1) = inst.cp_pos[n][1] / wavelength;
  }
  return t;
}

/// Applies one of two MLPs row-wise according to membership of the row's
/// pair in the support (associated vs candidate parameter path).
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

void split_rows(const SupportSet& support, int total, std::vector<int>& assoc,
                std::vector<int>& cand) {
  assoc.clear();
  cand.clear();
  for (int p = 0; p < total; ++p)
    (support.contains(p) ? assoc : cand).push_back(p);
}

}  // namespace

// ---------------------------------------------------------------------------
// CfActor
// ---------------------------------------------------------------------------

CfActor::CfActor(CfConfig cfg, DvlnHyper hp) : cfg_(std::move(cfg)), hp_(hp) {
  cfg_.validate();
  const int d = hp_.d_h;
  const int hid = hp_.mlp_hidden;
  auto bnmlp = [&](const std::string& name, int in, int out) {
    return Mlp("cf.actor." + name, MlpSpec::with_batchnorm(in, hid, out));
  };
  enc_init_ = bnmlp("enc.init", 2 * cfg_.antennas, d);
  for (int l = 0; l < hp_.enc_layers; ++l)
    enc_layers_.emplace_back("cf.actor.enc.l" + std::to_string(l), d, hid, true);
  ctx_init_assoc_ = bnmlp("ctx.init_assoc", 2 * cfg_.antennas + d, d);
  ctx_init_cand_ = bnmlp("ctx.init_cand", 2 * cfg_.antennas + d, d);
  for (int l = 0; l < hp_.ctx_layers; ++l) {
    std::string p = "ctx.l" + std::to_string(l) + ".";
    CtxLayer layer;
    layer.msg_to_ue_assoc = bnmlp(p + "msg_to_ue_assoc", 2 * d, d);
    layer.msg_to_ue_cand = bnmlp(p + "msg_to_ue_cand", 2 * d, d);
    layer.msg_to_ap_assoc = bnmlp(p + "msg_to_ap_assoc", 2 * d, d);
    layer.msg_to_ap_cand = bnmlp(p + "msg_to_ap_cand", 2 * d, d);
    layer.ue_update = bnmlp(p + "ue_update", 2 * d, d);
    layer.ap_update = bnmlp(p + "ap_update", 2 * d, d);
    layer.edge_assoc = bnmlp(p + "edge_assoc", 3 * d, d);
    layer.edge_cand = bnmlp(p + "edge_cand", 3 * d, d);
    ctx_layers_.push_back(std::move(layer));
  }
  ctx_out_ue_ = Mlp("cf.actor.ctx.out_ue", MlpSpec::linear(d, d));
  ctx_out_ap_ = Mlp("cf.actor.ctx.out_ap", MlpSpec::linear(d, d));
  ctx_out_edge_ = Mlp("cf.actor.ctx.out_edge", MlpSpec::linear(d, d));
}

void CfActor::init_params(ParamStore& store, RngStream& rng) const {
  const int d = hp_.d_h;
  enc_init_.init_params(store, rng);
  for (const auto& l : enc_layers_) l.init_params(store, rng);
  // Trainable end-token embedding.
  store.create_xavier("cf.actor.r_beta", 1, d, rng);
  ctx_init_assoc_.init_params(store, rng);
  ctx_init_cand_.init_params(store, rng);
  for (const auto& l : ctx_layers_) {
    l.msg_to_ue_assoc.init_params(store, rng);
    l.msg_to_ue_cand.init_params(store, rng);
    l.msg_to_ap_assoc.init_params(store, rng);
    l.msg_to_ap_cand.init_params(store, rng);
    l.ue_update.init_params(store, rng);
    l.ap_update.init_params(store, rng);
    l.edge_assoc.init_params(store, rng);
    l.edge_cand.init_params(store, rng);
  }
  ctx_out_ue_.init_params(store, rng);
  ctx_out_ap_.init_params(store, rng);
  ctx_out_edge_.init_params(store, rng);
  store.create_xavier("cf.actor.att.wq", d, d, rng);
  store.create_xavier("cf.actor.att.wk", d, d, rng);
}

Tape::Id CfActor::encode(Tape& tape, const CfInstance& inst,
                         const ParamStore& store, double input_scale,
                         bool training, BnBatchStats* bn) const {
  const int k = cfg_.num_ues, l = cfg_.num_aps, d = hp_.d_h;
  Tape::Id feats = tape.constant(cf_channel_features(inst, input_scale));
  Tape::Id edge = enc_init_.apply(tape, feats, store, training, bn);
  Tape::Id tx = tape.constant(Tensor::zeros(k, d));
  Tape::Id rx = tape.constant(Tensor::zeros(l, d));
  for (const auto& layer : enc_layers_) {
    auto out = layer.apply(tape, tx, rx, edge, k, l, store, training, bn);
    tx = out.tx;
    rx = out.rx;
    edge = out.edge;
  }
  return edge;
}

Tape::Id CfActor::context(Tape& tape, const CfInstance& inst,
                          const SupportSet& support, Tape::Id embeddings,
                          const ParamStore& store, double input_scale,
                          bool training, BnBatchStats* bn) const {
  const int k = cfg_.num_ues, l = cfg_.num_aps, d = hp_.d_h;
  const int pairs = cfg_.pairs();
  std::vector<int> assoc, cand;
  split_rows(support, pairs, assoc, cand);

  Tape::Id feats = tape.constant(cf_channel_features(inst, input_scale));
  Tape::Id init_in = tape.concat_cols({feats, embeddings});
  Tape::Id edge = typed_apply(tape, ctx_init_assoc_, ctx_init_cand_, init_in,
                              assoc, cand, pairs, store, training, bn);
  Tape::Id f_ue = tape.constant(Tensor::zeros(k, d));
  Tape::Id f_ap = tape.constant(Tensor::zeros(l, d));
  for (const auto& layer : ctx_layers_) {
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
  Tape::Id pooled_ue =
      tape.col_means(ctx_out_ue_.apply(tape, f_ue, store, training, bn));
  Tape::Id pooled_ap =
      tape.col_means(ctx_out_ap_.apply(tape, f_ap, store, training, bn));
  Tape::Id pooled_edge =
      tape.col_means(ctx_out_edge_.apply(tape, edge, store, training, bn));
  return tape.add(tape.add(pooled_ue, pooled_ap), pooled_edge);
}

// ---------------------------------------------------------------------------
// CfEpisode
// ---------------------------------------------------------------------------

CfEpisode::CfEpisode(const CfActor& actor, const CfInstance& inst,
                     const ParamStore& store, double input_scale, bool training,
                     BnBatchStats* bn)
    : actor_(actor),
      inst_(inst),
      store_(store),
      input_scale_(input_scale),
      training_(training),
      bn_(bn),
      oracle_(cf_constraint_oracle(actor.config())),
      state_(actor.config().pairs()) {
  embeddings_ = actor_.encode(tape_, inst_, store_, input_scale_, training_, bn_);
}

StepDist CfEpisode::step_dist() {
  last_context_ = actor_.context(tape_, inst_, state_.support, embeddings_,
                                 store_, input_scale_, training_, bn_);
  std::vector<int> infeasible = infeasible_candidates(state_, oracle_);
  StepDist dist;
  for (int p = 0; p < state_.support.universe(); ++p) {
    if (state_.support.contains(p)) continue;
    dist.entries.push_back(p);
    bool bad = std::binary_search(infeasible.begin(), infeasible.end(), p);
    dist.feasible.push_back(bad ? 0 : 1);
  }
  std::vector<int> rows = dist.entries;
  Tape::Id cand_emb = tape_.gather_rows(embeddings_, rows);
  Tape::Id beta = tape_.param(store_, "cf.actor.r_beta");
  Tape::Id all_emb = tape_.concat_rows({cand_emb, beta});
  dist.entries.push_back(EpisodeTrace::kEndToken);
  dist.feasible.push_back(1);  // stopping is always legal
  Tape::Id wq = tape_.param(store_, "cf.actor.att.wq");
  Tape::Id wk = tape_.param(store_, "cf.actor.att.wk");
  dist.scores = clipped_attention_scores(tape_, all_emb, last_context_, wq, wk,
                                         actor_.hyper().clip_c);
  dist.probs = tape_.masked_softmax(dist.scores, dist.feasible);
  return dist;
}

Tape::Id CfEpisode::commit(const StepDist& dist, int row) {
  if (row < 0 || row >= static_cast<int>(dist.entries.size()))
    throw ShapeError("CfEpisode::commit: row out of range");
  Tape::Id lp = tape_.log_(tape_.pick(dist.probs, row));
  int action = dist.entries[row];
  if (action == EpisodeTrace::kEndToken)
    state_.support.terminate();
  else
    state_.support.insert(action);
  state_.step += 1;
  actions_.push_back(action);
  logp_nodes_.push_back(lp);
  logp_values_.push_back(tape_.value(lp).item());
  return lp;
}

bool CfEpisode::finished() const {
  return state_.support.terminated() || state_.support.size() >= bound();
}

EpisodeTrace CfEpisode::trace() const {
  EpisodeTrace t;
  t.actions = actions_;
  t.step_logp = logp_values_;
  return t;
}

Tape::Id CfEpisode::logp_sum_node() {
  if (logp_nodes_.empty()) throw ShapeError("logp_sum_node: no steps taken");
  Tape::Id s = logp_nodes_[0];
  for (size_t i = 1; i < logp_nodes_.size(); ++i)
    s = tape_.add(s, logp_nodes_[i]);
  return s;
}

EpisodeTrace decode_cf(CfEpisode& ep, DecodeMode mode, RngStream* rng) {
  while (!ep.finished()) {
    StepDist dist = ep.step_dist();
    const Tensor& p = ep.tape().value(dist.probs);
    int row = (mode == DecodeMode::kGreedy) ? dist.greedy_row(p)
                                            : rng->categorical(p.v);
    ep.commit(dist, row);
  }
  return ep.trace();
}

// ---------------------------------------------------------------------------
// MaActor
// ---------------------------------------------------------------------------

MaActor::MaActor(MaConfig cfg, DvlnHyper hp) : cfg_(std::move(cfg)), hp_(hp) {
  cfg_.validate();
  const int d = hp_.d_h;
  const int hid = hp_.mlp_hidden;
  auto mlp = [&](const std::string& name, int in, int out) {
    return Mlp("ma.actor." + name, MlpSpec::relu_only(in, hid, out));
  };
  enc_edge_init_ = mlp("enc.edge_init", 2, d);
  enc_cp_init_ = mlp("enc.cp_init", 2, d);
  for (int l = 0; l < hp_.enc_layers; ++l)
    enc_layers_.emplace_back("ma.actor.enc.l" + std::to_string(l), d, hid,
                             false);
  ctx_chosen_ = mlp("ctx.chosen", d, d);
  ctx_chan_ = mlp("ctx.chan", 2, d);
  ctx_agg_ = mlp("ctx.agg", 2 + d, d);
  ctx_merge_ = mlp("ctx.merge", 2 * d, d);
  mha_ = MhaBlock("ma.actor.mha", d, hp_.mha_heads);
}

void MaActor::init_params(ParamStore& store, RngStream& rng) const {
  enc_edge_init_.init_params(store, rng);
  enc_cp_init_.init_params(store, rng);
  for (const auto& l : enc_layers_) l.init_params(store, rng);
  ctx_chosen_.init_params(store, rng);
  ctx_chan_.init_params(store, rng);
  ctx_agg_.init_params(store, rng);
  ctx_merge_.init_params(store, rng);
  mha_.init_params(store, rng);
  store.create_xavier("ma.actor.r_star", 1, hp_.d_h, rng);
  store.create_xavier("ma.actor.att.wq", hp_.d_h, hp_.d_h, rng);
  store.create_xavier("ma.actor.att.wk", hp_.d_h, hp_.d_h, rng);
}

Tape::Id MaActor::encode(Tape& tape, const MaInstance& inst,
                         const ParamStore& store, double input_scale,
                         bool training, BnBatchStats* bn) const {
  const int k = inst.num_ues, n = inst.num_cps, d = hp_.d_h;
  // Edge rows UE-major: row = k * N + n.
  Tensor feats(k * n, 2);
  for (int ik = 0; ik < k; ++ik)
    for (int in = 0; in < n; ++in) {
      std::complex<double> h = inst.channels(ik, in) / input_scale;
      feats.at(ik * n + in, 0) = h.real();
      feats.at(ik * n + in, 1) = h.imag();
    }
  Tape::Id edge =
      enc_edge_init_.apply(tape, tape.constant(std::move(feats)), store,
                           training, bn);
  Tape::Id rx = enc_cp_init_.apply(
      tape, tape.constant(ma_coord_features(inst, cfg_.wavelength_m)), store,
      training, bn);
  Tape::Id tx = tape.constant(Tensor::zeros(k, d));
  for (const auto& layer : enc_layers_) {
    auto out = layer.apply(tape, tx, rx, edge, k, n, store, training, bn);
    tx = out.tx;
    rx = out.rx;
    edge = out.edge;
  }
  return rx;  // CP-node features
}

Tape::Id MaActor::global_feature(Tape& tape, const MaInstance& inst,
                                 const ParamStore& store, double input_scale,
                                 bool training, BnBatchStats* bn) const {
  const int k = inst.num_ues, n = inst.num_cps;
  // CP-major layout so per-CP means are consecutive groups.
  Tensor feats(n * k, 2);
  for (int in = 0; in < n; ++in)
    for (int ik = 0; ik < k; ++ik) {
      std::complex<double> h = inst.channels(ik, in) / input_scale;
      feats.at(in * k + ik, 0) = h.real();
      feats.at(in * k + ik, 1) = h.imag();
    }
  Tape::Id msg = ctx_chan_.apply(tape, tape.constant(std::move(feats)), store,
                                 training, bn);
  Tape::Id per_cp = tape.group_mean_rows(msg, n);
  Tape::Id coords = tape.constant(ma_coord_features(inst, cfg_.wavelength_m));
  Tape::Id agg = ctx_agg_.apply(tape, tape.concat_cols({coords, per_cp}), store,
                                training, bn);
  return tape.col_means(agg);
}

Tape::Id MaActor::context(Tape& tape, const SupportSet& support,
                          Tape::Id embeddings, Tape::Id global_feat,
                          const ParamStore& store, bool training,
                          BnBatchStats* bn) const {
  Tape::Id chosen_term;
  if (support.size() == 0) {
    chosen_term = tape.param(store, "ma.actor.r_star");
  } else {
    Tape::Id sel = tape.gather_rows(embeddings, support.chosen());
    chosen_term =
        tape.col_means(ctx_chosen_.apply(tape, sel, store, training, bn));
  }
  Tape::Id merged = ctx_merge_.apply(
      tape, tape.concat_cols({chosen_term, global_feat}), store, training, bn);
  return mha_.apply(tape, merged, embeddings, store);
}

// ---------------------------------------------------------------------------
// MaEpisode
// ---------------------------------------------------------------------------

MaEpisode::MaEpisode(const MaActor& actor, const MaInstance& inst,
                     const ParamStore& store, double input_scale, bool training,
                     BnBatchStats* bn)
    : actor_(actor),
      inst_(inst),
      store_(store),
      training_(training),
      bn_(bn),
      oracle_(ma_constraint_oracle(actor.config(), inst.cp_pos)),
      state_(inst.num_cps) {
  embeddings_ =
      actor_.encode(tape_, inst_, store_, input_scale, training_, bn_);
  global_feat_ =
      actor_.global_feature(tape_, inst_, store_, input_scale, training_, bn_);
}

std::optional<StepDist> MaEpisode::step_dist() {
  last_context_ = actor_.context(tape_, state_.support, embeddings_,
                                 global_feat_, store_, training_, bn_);
  std::vector<int> infeasible = infeasible_candidates(state_, oracle_);
  StepDist dist;
  for (int n = 0; n < state_.support.universe(); ++n) {
    if (state_.support.contains(n)) continue;
    dist.entries.push_back(n);
    bool bad = std::binary_search(infeasible.begin(), infeasible.end(), n);
    dist.feasible.push_back(bad ? 0 : 1);
  }
  bool any = false;
  for (uint8_t f : dist.feasible) any |= (f != 0);
  if (!any) {
    dead_end_ = true;
    return std::nullopt;
  }
  Tape::Id cand_emb = tape_.gather_rows(embeddings_, dist.entries);
  Tape::Id wq = tape_.param(store_, "ma.actor.att.wq");
  Tape::Id wk = tape_.param(store_, "ma.actor.att.wk");
  dist.scores = clipped_attention_scores(tape_, cand_emb, last_context_, wq, wk,
                                         actor_.hyper().clip_c);
  dist.probs = tape_.masked_softmax(dist.scores, dist.feasible);
  return dist;
}

Tape::Id MaEpisode::commit(const StepDist& dist, int row) {
  if (row < 0 || row >= static_cast<int>(dist.entries.size()))
    throw ShapeError("MaEpisode::commit: row out of range");
  Tape::Id lp = tape_.log_(tape_.pick(dist.probs, row));
  state_.support.insert(dist.entries[row]);
  state_.step += 1;
  actions_.push_back(dist.entries[row]);
  logp_nodes_.push_back(lp);
  logp_values_.push_back(tape_.value(lp).item());
  return lp;
}

void MaEpisode::pop() {
  state_.support.pop_last();
  state_.step -= 1;
  actions_.pop_back();
  logp_nodes_.pop_back();
  logp_values_.pop_back();
  dead_end_ = false;
}

bool MaEpisode::finished() const {
  return dead_end_ || state_.support.size() >= actor_.config().num_antennas;
}

EpisodeTrace MaEpisode::trace() const {
  EpisodeTrace t;
  t.actions = actions_;
  t.step_logp = logp_values_;
  t.dead_end = dead_end_;
  return t;
}

Tape::Id MaEpisode::logp_sum_node() {
  if (logp_nodes_.empty()) throw ShapeError("logp_sum_node: no steps taken");
  Tape::Id s = logp_nodes_[0];
  for (size_t i = 1; i < logp_nodes_.size(); ++i)
    s = tape_.add(s, logp_nodes_[i]);
  return s;
}

EpisodeTrace decode_ma(MaEpisode& ep, DecodeMode mode, RngStream* rng) {
  while (!ep.finished()) {
    auto dist = ep.step_dist();
    if (!dist.has_value()) {
      if (mode == DecodeMode::kGreedy)
        throw DeadEndError("decode_ma: no feasible candidate in greedy mode");
      break;  // dead end flagged; utility-0 policy applies
    }
    const Tensor& p = ep.tape().value(dist->probs);
    int row = (mode == DecodeMode::kGreedy) ? dist->greedy_row(p)
                                            : rng->categorical(p.v);
    ep.commit(*dist, row);
  }
  return ep.trace();
}

}  // namespace mdra
