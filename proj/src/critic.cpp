#include "mdra/critic.hpp"

namespace mdra {

CfCritic::CfCritic(CfConfig cfg, CriticHyper hp)
    : cfg_(std::move(cfg)), hp_(hp) {
  edge_init_ = Mlp("cf.critic.edge_init",
                   MlpSpec::with_batchnorm(2 * cfg_.antennas, hp_.mlp_hidden,
                                           hp_.d));
  for (int l = 0; l < hp_.layers; ++l)
    layers_.emplace_back("cf.critic.l" + std::to_string(l), hp_.d,
                         hp_.mlp_hidden, true);
  head_ue_ = Mlp("cf.critic.head_ue", MlpSpec::linear(hp_.d, 1));
  head_ap_ = Mlp("cf.critic.head_ap", MlpSpec::linear(hp_.d, 1));
  head_edge_ = Mlp("cf.critic.head_edge", MlpSpec::linear(hp_.d, 1));
}

void CfCritic::init_params(ParamStore& store, RngStream& rng) const {
  edge_init_.init_params(store, rng);
  for (const auto& l : layers_) l.init_params(store, rng);
  head_ue_.init_params(store, rng);
  head_ap_.init_params(store, rng);
  head_edge_.init_params(store, rng);
}

Tape::Id CfCritic::value(Tape& tape, const CfInstance& inst,
                         const ParamStore& store, double input_scale,
                         bool training, BnBatchStats* bn) const {
  const int k = cfg_.num_ues, l = cfg_.num_aps, d = hp_.d, m = cfg_.antennas;
  Tensor feats(cfg_.pairs(), 2 * m);
  for (int p = 0; p < cfg_.pairs(); ++p)
    for (int i = 0; i < m; ++i) {
      std::complex<double> h = inst.channels(i, p) / input_scale;
      feats.at(p, i) = h.real();
      feats.at(p, m + i) = h.imag();
    }
  Tape::Id edge = edge_init_.apply(tape, tape.constant(std::move(feats)), store,
                                   training, bn);
  Tape::Id tx = tape.constant(Tensor::zeros(k, d));
  Tape::Id rx = tape.constant(Tensor::zeros(l, d));
  for (const auto& layer : layers_) {
    auto out = layer.apply(tape, tx, rx, edge, k, l, store, training, bn);
    tx = out.tx;
    rx = out.rx;
    edge = out.edge;
  }
  Tape::Id pooled = tape.add(
      tape.add(
          tape.mean_all(head_ue_.apply(tape, tx, store, training, bn)),
          tape.mean_all(head_ap_.apply(tape, rx, store, training, bn))),
      tape.mean_all(head_edge_.apply(tape, edge, store, training, bn)));
  return tape.relu(pooled);
}

MaCritic::MaCritic(MaConfig cfg, CriticHyper hp)
    : cfg_(std::move(cfg)), hp_(hp) {
  edge_init_ =
      Mlp("ma.critic.edge_init", MlpSpec::relu_only(2, hp_.mlp_hidden, hp_.d));
  cp_init_ =
      Mlp("ma.critic.cp_init", MlpSpec::relu_only(2, hp_.mlp_hidden, hp_.d));
  for (int l = 0; l < hp_.layers; ++l)
    layers_.emplace_back("ma.critic.l" + std::to_string(l), hp_.d,
                         hp_.mlp_hidden, false);
  head_ue_ = Mlp("ma.critic.head_ue", MlpSpec::linear(hp_.d, 1));
  head_cp_ = Mlp("ma.critic.head_cp", MlpSpec::linear(hp_.d, 1));
  head_edge_ = Mlp("ma.critic.head_edge", MlpSpec::linear(hp_.d, 1));
}

void MaCritic::init_params(ParamStore& store, RngStream& rng) const {
  edge_init_.init_params(store, rng);
  cp_init_.init_params(store, rng);
  for (const auto& l : layers_) l.init_params(store, rng);
  head_ue_.init_params(store, rng);
  head_cp_.init_params(store, rng);
  head_edge_.init_params(store, rng);
}

Tape::Id MaCritic::value(Tape& tape, const MaInstance& inst,
                         const ParamStore& store, double input_scale,
                         bool training, BnBatchStats* bn) const {
  const int k = inst.num_ues, n = inst.num_cps, d = hp_.d;
  Tensor feats(k * n, 2);
  for (int ik = 0; ik < k; ++ik)
    for (int in = 0; in < n; ++in) {
      std::complex<double> h = inst.channels(ik, in) / input_scale;
      feats.at(ik * n + in, 0) = h.real();
      feats.at(ik * n + in, 1) = h.imag();
    }
  Tensor coords(n, 2);
  for (int in = 0; in < n; ++in) {
    coords.at(in, 0) = inst.cp_pos[in][0] / cfg_.wavelength_m;
    coords.at(in, 1) = inst.cp_pos[in][1] / cfg_.wavelength_m;
  }
  Tape::Id edge = edge_init_.apply(tape, tape.constant(std::move(feats)), store,
                                   training, bn);
  Tape::Id rx = cp_init_.apply(tape, tape.constant(std::move(coords)), store,
                               training, bn);
  Tape::Id tx = tape.constant(Tensor::zeros(k, d));
  for (const auto& layer : layers_) {
    auto out = layer.apply(tape, tx, rx, edge, k, n, store, training, bn);
    tx = out.tx;
    rx = out.rx;
    edge = out.edge;
  }
  Tape::Id pooled = tape.add(
      tape.add(
          tape.mean_all(head_ue_.apply(tape, tx, store, training, bn)),
          tape.mean_all(head_cp_.apply(tape, rx, store, training, bn))),
      tape.mean_all(head_edge_.apply(tape, edge, store, training, bn)));
  return tape.relu(pooled);
}

}  // namespace mdra
