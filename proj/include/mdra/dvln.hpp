#pragma once

#include <memory>
#include <optional>

#include "mdra/attention.hpp"
#include "mdra/engnn.hpp"
#include "mdra/scenario_cf.hpp"
#include "mdra/scenario_ma.hpp"

namespace mdra {

/// Discrete-variable network hyper-parameters.
struct DvlnHyper {
  int d_h = 128;       // embedding / context width
  int mlp_hidden = 128;
  int enc_layers = 2;  // encoder ENGNN layers
  int ctx_layers = 2;  // context-network layers (cell-free)
  int mha_heads = 8;   // context refinement heads (movable antenna)
  double clip_c = 8.0; // attention score clip
};

enum class DecodeMode { kSample, kGreedy };

/// Per-episode record: actions in selection order, per-step log-probabilities
/// (their sum is log p(A|h)), the terminal utility, and the dead-end flag.
struct EpisodeTrace {
  static constexpr int kEndToken = -1;
  std::vector<int> actions;
  std::vector<double> step_logp;
  double utility = 0.0;
  bool dead_end = false;

  double logp_sum() const {
    double s = 0;
    for (double x : step_logp) s += x;
    return s;
  }
};

/// Distribution over the current step's actions. `entries[i]` is the acted-on
/// index (pair or CP); the cell-free dist carries the end token as its last
/// entry with value EpisodeTrace::kEndToken.
struct StepDist {
  Tape::Id scores = -1;  // n x 1 clipped attention scores
  Tape::Id probs = -1;   // n x 1, masked entries exactly 0
  std::vector<int> entries;
  std::vector<uint8_t> feasible;

  int greedy_row(const Tensor& p) const {
    int best = 0;
    for (int i = 1; i < p.rows; ++i)
      if (p.v[i] > p.v[best]) best = i;
    return best;
  }
};

// ---------------------------------------------------------------------------
// Cell-free actor: ENGNN encoder over UE/AP graph, typed-edge context GNN,
// clipped cross-attention decoder with a trainable end token.
// ---------------------------------------------------------------------------

class CfActor {
 public:
  CfActor(CfConfig cfg, DvlnHyper hp);
  void init_params(ParamStore& store, RngStream& rng) const;

  const CfConfig& config() const { return cfg_; }
  const DvlnHyper& hyper() const { return hp_; }

  /// Edge embeddings r_kl (K*L x d_h): final ENGNN edge features with
  /// zero-initialized node features.
  Tape::Id encode(Tape& tape, const CfInstance& inst, const ParamStore& store,
                  double input_scale, bool training, BnBatchStats* bn) const;

  /// Context vector of the partial association: typed-edge GNN re-run from
  /// scratch (associated vs candidate parameter paths), mean-pooled heads.
  Tape::Id context(Tape& tape, const CfInstance& inst, const SupportSet& support,
                   Tape::Id embeddings, const ParamStore& store,
                   double input_scale, bool training, BnBatchStats* bn) const;

 private:
  friend class CfEpisode;
  CfConfig cfg_;
  DvlnHyper hp_;
  Mlp enc_init_;
  std::vector<EngnnLayer> enc_layers_;
  Mlp ctx_init_assoc_, ctx_init_cand_;
  struct CtxLayer {
    Mlp msg_to_ue_assoc, msg_to_ue_cand;
    Mlp msg_to_ap_assoc, msg_to_ap_cand;
    Mlp ue_update, ap_update;
    Mlp edge_assoc, edge_cand;
  };
  std::vector<CtxLayer> ctx_layers_;
  Mlp ctx_out_ue_, ctx_out_ap_, ctx_out_edge_;
};

/// One decoding episode on its own tape. Steps are computed lazily so callers
/// can sample, argmax, or enumerate before committing an action.
class CfEpisode {
 public:
  CfEpisode(const CfActor& actor, const CfInstance& inst,
            const ParamStore& store, double input_scale, bool training,
            BnBatchStats* bn);

  StepDist step_dist();
  /// Commits the action at `row` of `dist`; returns its log-prob node.
  Tape::Id commit(const StepDist& dist, int row);
  bool finished() const;

  const SupportSet& support() const { return state_.support; }
  int bound() const { return actor_.config().support_bound(); }
  EpisodeTrace trace() const;
  Tape::Id logp_sum_node();
  Tape::Id embeddings() const { return embeddings_; }
  Tape::Id last_context() const { return last_context_; }
  Tape& tape() { return tape_; }
  const CfInstance& instance() const { return inst_; }

 private:
  const CfActor& actor_;
  const CfInstance& inst_;
  const ParamStore& store_;
  double input_scale_;
  bool training_;
  BnBatchStats* bn_;
  Tape tape_;
  FeasibilityOracle oracle_;
  DecodingState state_;
  Tape::Id embeddings_ = -1;
  Tape::Id last_context_ = -1;
  std::vector<int> actions_;
  std::vector<Tape::Id> logp_nodes_;
  std::vector<double> logp_values_;
};

EpisodeTrace decode_cf(CfEpisode& ep, DecodeMode mode, RngStream* rng);

// ---------------------------------------------------------------------------
// Movable-antenna actor: ENGNN encoder over UE/CP graph, aggregation + MHA
// context, clipped cross-attention decoder; exactly M steps, no end token.
// ---------------------------------------------------------------------------

class MaActor {
 public:
  MaActor(MaConfig cfg, DvlnHyper hp);
  void init_params(ParamStore& store, RngStream& rng) const;

  const MaConfig& config() const { return cfg_; }
  const DvlnHyper& hyper() const { return hp_; }

  /// CP-node embeddings r_n (N x d_h) after the encoder layers.
  Tape::Id encode(Tape& tape, const MaInstance& inst, const ParamStore& store,
                  double input_scale, bool training, BnBatchStats* bn) const;

  /// Channel/position aggregation term of the context; independent of the
  /// partial support, so episodes compute it once and reuse the node.
  Tape::Id global_feature(Tape& tape, const MaInstance& inst,
                          const ParamStore& store, double input_scale,
                          bool training, BnBatchStats* bn) const;

  /// Context at the current step: chosen-mean (or the trainable start token
  /// when nothing is chosen), merged with the global feature and refined by
  /// multi-head attention against the embeddings.
  Tape::Id context(Tape& tape, const SupportSet& support, Tape::Id embeddings,
                   Tape::Id global_feat, const ParamStore& store, bool training,
                   BnBatchStats* bn) const;

 private:
  friend class MaEpisode;
  MaConfig cfg_;
  DvlnHyper hp_;
  Mlp enc_edge_init_, enc_cp_init_;
  std::vector<EngnnLayer> enc_layers_;
  Mlp ctx_chosen_, ctx_merge_, ctx_chan_, ctx_agg_;
  MhaBlock mha_;
};

class MaEpisode {
 public:
  MaEpisode(const MaActor& actor, const MaInstance& inst,
            const ParamStore& store, double input_scale, bool training,
            BnBatchStats* bn);

  /// Empty feasible set => dead end (no distribution is built).
  std::optional<StepDist> step_dist();
  Tape::Id commit(const StepDist& dist, int row);
  /// Reverts the most recent commit (used by exhaustive enumeration).
  void pop();
  bool finished() const;

  const SupportSet& support() const { return state_.support; }
  EpisodeTrace trace() const;
  Tape::Id logp_sum_node();
  Tape::Id embeddings() const { return embeddings_; }
  Tape::Id last_context() const { return last_context_; }
  Tape& tape() { return tape_; }
  const MaInstance& instance() const { return inst_; }
  const FeasibilityOracle& oracle() const { return oracle_; }

 private:
  const MaActor& actor_;
  const MaInstance& inst_;
  const ParamStore& store_;
  bool training_;
  BnBatchStats* bn_;
  Tape tape_;
  FeasibilityOracle oracle_;
  DecodingState state_;
  Tape::Id embeddings_ = -1;
  Tape::Id global_feat_ = -1;
  Tape::Id last_context_ = -1;
  bool dead_end_ = false;
  std::vector<int> actions_;
  std::vector<Tape::Id> logp_nodes_;
  std::vector<double> logp_values_;
};

EpisodeTrace decode_ma(MaEpisode& ep, DecodeMode mode, RngStream* rng);

}  // namespace mdra
