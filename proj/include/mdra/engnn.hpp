#pragma once

#include "mdra/mlp.hpp"

namespace mdra {

/// One edge-node GNN update layer: TX/RX node features are refreshed from
/// mean-aggregated per-edge messages and edge features from row- and
/// column-mean messages, each through its own MLP (seven per layer).
/// Edge rows are laid out tx-major: row = tx * n_rx + rx.
class EngnnLayer {
 public:
  EngnnLayer() = default;
  /// `feat` is the node/edge/message feature width; MLPs use `hidden`
  /// internally and batch-norm when `use_bn` is set.
  EngnnLayer(const std::string& prefix, int feat, int hidden, bool use_bn);

  void init_params(ParamStore& store, RngStream& rng) const;

  struct Out {
    Tape::Id tx, rx, edge;
  };
  Out apply(Tape& tape, Tape::Id tx, Tape::Id rx, Tape::Id edge, int n_tx,
            int n_rx, const ParamStore& store, bool training,
            BnBatchStats* bn) const;

 private:
  Mlp msg_to_tx_;   // (f_rx, e) -> message, mean over rx
  Mlp tx_update_;   // (f_tx, agg) -> f_tx'
  Mlp msg_to_rx_;   // (f_tx, e) -> message, mean over tx
  Mlp rx_update_;   // (f_rx, agg) -> f_rx'
  Mlp edge_col_;    // (e, f_rx) -> message, mean over tx for each rx
  Mlp edge_row_;    // (e, f_tx) -> message, mean over rx for each tx
  Mlp edge_update_; // (e, col_agg, row_agg) -> e'
};

}  // namespace mdra
