#pragma once

#include "mdra/engnn.hpp"
#include "mdra/scenario_cf.hpp"
#include "mdra/scenario_ma.hpp"

namespace mdra {

/// Continuous-variable network hyper-parameters.
struct CvlnHyper {
  int d = 64;
  int mlp_hidden = 64;
  int layers = 2;  // update layers
};

// ---------------------------------------------------------------------------
// Cell-free beamformer: typed-edge GNN (channel-only inputs) with an FC head
// emitting stacked (re, im) per edge, followed by the per-AP power projection
// w_kl <- sqrt(P) b_kl w_kl / sqrt(max{sum_k' b_k'l ||w_k'l||^2, P}).
// ---------------------------------------------------------------------------

class CfCvln {
 public:
  CfCvln(CfConfig cfg, CvlnHyper hp);
  void init_params(ParamStore& store, RngStream& rng) const;

  /// Projected beamformer matrix node, K*L x 2M (rows pair-major, columns
  /// [re | im]). Rows of unassociated pairs are exactly zero.
  Tape::Id emit(Tape& tape, const CfInstance& inst, const SupportSet& support,
                const ParamStore& store, double input_scale, bool training,
                BnBatchStats* bn) const;

  const CfConfig& config() const { return cfg_; }

 private:
  CfConfig cfg_;
  CvlnHyper hp_;
  Mlp init_assoc_, init_cand_;
  struct Layer {
    Mlp msg_to_ue_assoc, msg_to_ue_cand;
    Mlp msg_to_ap_assoc, msg_to_ap_cand;
    Mlp ue_update, ap_update;
    Mlp edge_assoc, edge_cand;
  };
  std::vector<Layer> layers_;
  Mlp head_;
};

/// Sum-rate node from a projected CF beamformer matrix.
Tape::Id cf_rate_node(Tape& tape, const CfConfig& cfg, const CfInstance& inst,
                      const SupportSet& support, Tape::Id w);

/// Extracts a CfSolution from the beamformer node's value.
CfSolution cf_solution_from_node(const Tape& tape, Tape::Id w,
                                 const CfConfig& cfg, const SupportSet& support);

// ---------------------------------------------------------------------------
// Movable-antenna beamformer: ENGNN over MA/UE graph predicts (mu_k, p_k);
// both are P_max * softmax-normalized, and the beamformer follows the
// optimal structure w_k = sqrt(p_k) * normalized (I + sum_i mu_i/sigma^2
// h_i h_i^H)^{-1} h_k over the selected channels.
// ---------------------------------------------------------------------------

class MaCvln {
 public:
  MaCvln(MaConfig cfg, CvlnHyper hp);
  void init_params(ParamStore& store, RngStream& rng) const;

  struct Emit {
    Tape::Id w;   // K x 2M beamformers (rows per UE)
    Tape::Id p;   // K x 1 power split, sums to P_max
    Tape::Id mu;  // K x 1 regularization split, sums to P_max
  };
  Emit emit(Tape& tape, const MaInstance& inst, const SupportSet& support,
            const ParamStore& store, double input_scale, bool training,
            BnBatchStats* bn) const;

  const MaConfig& config() const { return cfg_; }

 private:
  MaConfig cfg_;
  CvlnHyper hp_;
  Mlp edge_init_;
  std::vector<EngnnLayer> layers_;
  Mlp head_;
};

/// Sum-rate node from an MA beamformer matrix (selected-channel ordering).
Tape::Id ma_rate_node(Tape& tape, const MaConfig& cfg, const MaInstance& inst,
                      const SupportSet& support, Tape::Id w);

MaSolution ma_solution_from_node(const Tape& tape, Tape::Id w,
                                 const MaConfig& cfg, const SupportSet& support);

/// Feasible support built by sequential uniform choice over unmasked
/// candidates; restarts on dead ends (budget 1e4). Used for CVLN pretraining
/// and as a control method.
SupportSet random_feasible_support(const FeasibilityOracle& oracle,
                                   int universe, int target_cardinality,
                                   RngStream& rng);

}  // namespace mdra
