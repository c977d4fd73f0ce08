#pragma once

#include "mdra/critic.hpp"
#include "mdra/cvln.hpp"
#include "mdra/dvln.hpp"

namespace mdra {

/// Adam with bias correction; step() minimizes, so utility gradients are
/// negated by the caller (gradient ascent per the training algorithm).
struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::map<std::string, Tensor> m, v;

  void step(ParamStore& params, const GradStore& grads, double lr);
};

struct TrainConfig {
  int epochs = 100;
  int steps_per_epoch = 50;
  int batch_size = 1024;
  double lr = 1e-4;
  uint64_t seed = 0;
  bool pretrain = false;
  int pretrain_steps = 0;
  double clip_norm = 10.0;
  int threads = 0;       // 0 = hardware concurrency
  int grad_groups = 32;  // fixed reduction grouping (reproducibility)

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_rate = 0;
  double val_rate = 0;
  double assoc_rate = 0;  // mean decode length / cardinality bound
  double critic_loss = 0;
};

// ---------------------------------------------------------------------------
// Model bundles: network definitions plus their parameter stores.
// ---------------------------------------------------------------------------

struct CfModel {
  CfConfig cfg;
  DvlnHyper actor_hp;
  CvlnHyper cvln_hp;
  CriticHyper critic_hp;
  CfActor actor_net;
  CfCvln cvln_net;
  CfCritic critic_net;
  ParamStore actor, cvln, critic;
  double input_scale = 1.0;

  CfModel(CfConfig c, DvlnHyper ah, CvlnHyper ch, CriticHyper crh)
      : cfg(c),
        actor_hp(ah),
        cvln_hp(ch),
        critic_hp(crh),
        actor_net(c, ah),
        cvln_net(c, ch),
        critic_net(c, crh) {}
  void init_params(uint64_t seed);
};

struct MaModel {
  MaConfig cfg;
  DvlnHyper actor_hp;
  CvlnHyper cvln_hp;
  CriticHyper critic_hp;
  MaActor actor_net;
  MaCvln cvln_net;
  MaCritic critic_net;
  ParamStore actor, cvln, critic;
  double input_scale = 1.0;

  MaModel(MaConfig c, DvlnHyper ah, CvlnHyper ch, CriticHyper crh)
      : cfg(c),
        actor_hp(ah),
        cvln_hp(ch),
        critic_hp(crh),
        actor_net(c, ah),
        cvln_net(c, ch),
        critic_net(c, crh) {}
  void init_params(uint64_t seed);
};

/// RMS magnitude of the channel entries across a training set; the single
/// input-normalization scalar stored with the model.
double compute_input_scale_cf(const std::vector<CfInstance>& set);
double compute_input_scale_ma(const std::vector<MaInstance>& set);

/// Optimizer state carried across epochs (and checkpoints).
struct TrainerState {
  AdamState adam_actor, adam_cvln, adam_critic;
  int next_epoch = 0;
};

/// Joint training: per step, sample a batch, decode in sampling mode, apply
/// the continuous network, and take the three Adam updates (continuous
/// pathwise, discrete policy-gradient with critic baseline, critic MSE).
/// Appends one metrics row per epoch; fully reproducible from the seed.
void train_cf(CfModel& model, const TrainConfig& cfg,
              const std::vector<CfInstance>& train_set,
              const std::vector<CfInstance>& val_set, TrainerState& state,
              std::vector<EpochMetrics>& metrics);
void train_ma(MaModel& model, const TrainConfig& cfg,
              const std::vector<MaInstance>& train_set,
              const std::vector<MaInstance>& val_set, TrainerState& state,
              std::vector<EpochMetrics>& metrics);

/// Greedy-decode validation (eval-mode networks). For MA, greedy dead ends
/// count as rate 0.
struct EvalStats {
  double mean_rate = 0;
  double mean_assoc = 0;  // decode length / bound
};
EvalStats validate_cf(const CfModel& model, const std::vector<CfInstance>& set,
                      int threads);
EvalStats validate_ma(const MaModel& model, const std::vector<MaInstance>& set,
                      int threads);

// ---------------------------------------------------------------------------
// Gradient estimators exposed for verification.
// ---------------------------------------------------------------------------

/// One REINFORCE term: a finished episode's tape, its summed log-prob node,
/// and the (utility - baseline) advantage.
struct PgTerm {
  Tape* tape = nullptr;
  Tape::Id logp = -1;
  double advantage = 0;
};

/// Mean over terms of advantage * grad(log p).
GradStore policy_gradient_batch(const std::vector<PgTerm>& terms);

/// One Adam step on the critic's mean squared error against the given
/// utilities; returns the pre-step loss. The zero-residual batch leaves the
/// parameters untouched.
double critic_step_cf(CfModel& model, const std::vector<const CfInstance*>& batch,
                      const std::vector<double>& utilities, AdamState& adam,
                      double lr);
double critic_step_ma(MaModel& model, const std::vector<const MaInstance*>& batch,
                      const std::vector<double>& utilities, AdamState& adam,
                      double lr);

/// Critic estimate for one instance (training-mode batch statistics off).
double critic_value_cf(const CfModel& model, const CfInstance& inst);
double critic_value_ma(const MaModel& model, const MaInstance& inst);

/// Exhaustive policy-gradient computation on an enumerable instance: walks
/// every decoder trajectory, returning both the direct gradient of
/// sum_A p(A) U(A) (autodiff through the mixture) and the score-function form
/// sum_A p(A) U(A) grad log p(A), plus the baseline identity term
/// sum_A p(A) grad log p(A) (zero in expectation).
struct ExactPg {
  GradStore direct;
  GradStore score;
  GradStore score_mean;
  double expected_utility = 0;
  double total_probability = 0;
  int trajectories = 0;
};
ExactPg exact_policy_gradient(
    const MaActor& actor, const MaInstance& inst, const ParamStore& store,
    double input_scale, const std::function<double(const SupportSet&)>& utility);

/// Pools per-application batch-norm statistics and folds them into the
/// running mean/variance entries (momentum 0.1, unbiased variance).
void apply_bn_updates(std::vector<ParamStore*> stores,
                      const std::vector<BnBatchStats>& parts,
                      double momentum = 0.1);

}  // namespace mdra
