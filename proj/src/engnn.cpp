#include "mdra/engnn.hpp"

namespace mdra {

EngnnLayer::EngnnLayer(const std::string& prefix, int feat, int hidden,
                       bool use_bn) {
  auto mk = [&](const char* name, int in, int out) {
    MlpSpec spec = use_bn ? MlpSpec::with_batchnorm(in, hidden, out)
                          : MlpSpec::relu_only(in, hidden, out);
    return Mlp(prefix + "." + name, spec);
  };
  msg_to_tx_ = mk("msg_to_tx", 2 * feat, feat);
  tx_update_ = mk("tx_update", 2 * feat, feat);
  msg_to_rx_ = mk("msg_to_rx", 2 * feat, feat);
  rx_update_ = mk("rx_update", 2 * feat, feat);
  edge_col_ = mk("edge_col", 2 * feat, feat);
  edge_row_ = mk("edge_row", 2 * feat, feat);
  edge_update_ = mk("edge_update", 3 * feat, feat);
}

void EngnnLayer::init_params(ParamStore& store, RngStream& rng) const {
  msg_to_tx_.init_params(store, rng);
  tx_update_.init_params(store, rng);
  msg_to_rx_.init_params(store, rng);
  rx_update_.init_params(store, rng);
  edge_col_.init_params(store, rng);
  edge_row_.init_params(store, rng);
  edge_update_.init_params(store, rng);
}

EngnnLayer::Out EngnnLayer::apply(Tape& tape, Tape::Id tx, Tape::Id rx,
                                  Tape::Id edge, int n_tx, int n_rx,
                                  const ParamStore& store, bool training,
                                  BnBatchStats* bn) const {
  // Node features broadcast onto the edge layout (row = tx * n_rx + rx).
  Tape::Id tx_e = tape.repeat_each_row(tx, n_rx);
  Tape::Id rx_e = tape.tile_rows(rx, n_tx);

  Tape::Id m_tx = msg_to_tx_.apply(tape, tape.concat_cols({rx_e, edge}), store,
                                   training, bn);
  Tape::Id agg_tx = tape.group_mean_rows(m_tx, n_tx);
  Tape::Id tx_new = tx_update_.apply(tape, tape.concat_cols({tx, agg_tx}),
                                     store, training, bn);

  Tape::Id m_rx = msg_to_rx_.apply(tape, tape.concat_cols({tx_e, edge}), store,
                                   training, bn);
  Tape::Id agg_rx = tape.group_mean_strided(m_rx, n_rx);
  Tape::Id rx_new = rx_update_.apply(tape, tape.concat_cols({rx, agg_rx}),
                                     store, training, bn);

  Tape::Id m_col = edge_col_.apply(tape, tape.concat_cols({edge, rx_e}), store,
                                   training, bn);
  Tape::Id col_agg = tape.group_mean_strided(m_col, n_rx);  // per rx
  Tape::Id m_row = edge_row_.apply(tape, tape.concat_cols({edge, tx_e}), store,
                                   training, bn);
  Tape::Id row_agg = tape.group_mean_rows(m_row, n_tx);  // per tx
  Tape::Id edge_new = edge_update_.apply(
      tape,
      tape.concat_cols({edge, tape.tile_rows(col_agg, n_tx),
                        tape.repeat_each_row(row_agg, n_rx)}),
      store, training, bn);
  return {tx_new, rx_new, edge_new};
}

}  // namespace mdra
