#pragma once

#include "mdra/engnn.hpp"
#include "mdra/scenario_cf.hpp"
#include "mdra/scenario_ma.hpp"

namespace mdra {

/// Sum-rate estimators: the scenario encoder's ENGNN skeleton with
/// single-layer pooled output heads under a ReLU (non-negative by
/// construction).
struct CriticHyper {
  int d = 128;
  int mlp_hidden = 128;
  int layers = 6;
};

class CfCritic {
 public:
  CfCritic(CfConfig cfg, CriticHyper hp);
  void init_params(ParamStore& store, RngStream& rng) const;
  /// Scalar estimate node (1 x 1), always >= 0.
  Tape::Id value(Tape& tape, const CfInstance& inst, const ParamStore& store,
                 double input_scale, bool training, BnBatchStats* bn) const;

 private:
  CfConfig cfg_;
  CriticHyper hp_;
  Mlp edge_init_;
  std::vector<EngnnLayer> layers_;
  Mlp head_ue_, head_ap_, head_edge_;
};

class MaCritic {
 public:
  MaCritic(MaConfig cfg, CriticHyper hp);
  void init_params(ParamStore& store, RngStream& rng) const;
  Tape::Id value(Tape& tape, const MaInstance& inst, const ParamStore& store,
                 double input_scale, bool training, BnBatchStats* bn) const;

 private:
  MaConfig cfg_;
  CriticHyper hp_;
  Mlp edge_init_, cp_init_;
  std::vector<EngnnLayer> layers_;
  Mlp head_ue_, head_cp_, head_edge_;
};

}  // namespace mdra
