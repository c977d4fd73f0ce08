#include "mdra/training.hpp"

#include <algorithm>
#include <cmath>

#include "mdra/parallel.hpp"

namespace mdra {

void AdamState::step(ParamStore& params, const GradStore& grads, double lr) {
  t += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (auto& [name, entry] : params) {
    if (!entry.trainable) continue;
    Tensor& value = entry.value;
    auto mit = m.try_emplace(name, Tensor(value.rows, value.cols)).first;
    auto vit = v.try_emplace(name, Tensor(value.rows, value.cols)).first;
    const Tensor* g = grads.has(name) ? &grads.at(name) : nullptr;
    for (size_t i = 0; i < value.v.size(); ++i) {
      double gi = g ? g->v[i] : 0.0;
      double& mi = mit->second.v[i];
      double& vi = vit->second.v[i];
      mi = beta1 * mi + (1.0 - beta1) * gi;
      vi = beta2 * vi + (1.0 - beta2) * gi * gi;
      value.v[i] -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1 || steps_per_epoch < 1 || batch_size < 1 || lr < 0)
    throw ShapeError("TrainConfig: epochs, steps, batch must be positive");
}

void CfModel::init_params(uint64_t seed) {
  RngStream ra(seed, "init.cf.actor");
  actor_net.init_params(actor, ra);
  RngStream rw(seed, "init.cf.cvln");
  cvln_net.init_params(cvln, rw);
  RngStream rc(seed, "init.cf.critic");
  critic_net.init_params(critic, rc);
}

void MaModel::init_params(uint64_t seed) {
  RngStream ra(seed, "init.ma.actor");
  actor_net.init_params(actor, ra);
  RngStream rw(seed, "init.ma.cvln");
  cvln_net.init_params(cvln, rw);
  RngStream rc(seed, "init.ma.critic");
  critic_net.init_params(critic, rc);
}

double compute_input_scale_cf(const std::vector<CfInstance>& set) {
  double s = 0;
  size_t n = 0;
  for (const auto& inst : set) {
    s += inst.channels.squaredNorm();
    n += inst.channels.size();
  }
  double rms = n ? std::sqrt(s / n) : 1.0;
  return rms > 0 ? rms : 1.0;
}

double compute_input_scale_ma(const std::vector<MaInstance>& set) {
  double s = 0;
  size_t n = 0;
  for (const auto& inst : set) {
    s += inst.channels.squaredNorm();
    n += inst.channels.size();
  }
  double rms = n ? std::sqrt(s / n) : 1.0;
  return rms > 0 ? rms : 1.0;
}

GradStore policy_gradient_batch(const std::vector<PgTerm>& terms) {
  GradStore out;
  for (const auto& term : terms)
    term.tape->backward(term.logp, out, term.advantage);
  if (!terms.empty()) out.scale(1.0 / static_cast<double>(terms.size()));
  return out;
}

namespace {

template <typename Model, typename Inst>
double critic_step_impl(Model& model, const std::vector<const Inst*>& batch,
                        const std::vector<double>& utilities, AdamState& adam,
                        double lr) {
  if (batch.size() != utilities.size() || batch.empty())
    throw ShapeError("critic_step: batch/utility size mismatch");
  GradStore grads;
  double loss = 0;
  for (size_t i = 0; i < batch.size(); ++i) {
    Tape tape;
    Tape::Id crit = model.critic_net.value(tape, *batch[i], model.critic,
                                           model.input_scale, true, nullptr);
    Tape::Id err = tape.square(
        tape.sub(crit, tape.constant_scalar(utilities[i])));
    loss += tape.value(err).item();
    tape.backward(err, grads);
  }
  loss /= batch.size();
  grads.scale(1.0 / static_cast<double>(batch.size()));
  adam.step(model.critic, grads, lr);
  return loss;
}

}  // namespace

double critic_step_cf(CfModel& model, const std::vector<const CfInstance*>& batch,
                      const std::vector<double>& utilities, AdamState& adam,
                      double lr) {
  return critic_step_impl(model, batch, utilities, adam, lr);
}

double critic_step_ma(MaModel& model, const std::vector<const MaInstance*>& batch,
                      const std::vector<double>& utilities, AdamState& adam,
                      double lr) {
  return critic_step_impl(model, batch, utilities, adam, lr);
}

double critic_value_cf(const CfModel& model, const CfInstance& inst) {
  Tape tape;
  return tape
      .value(model.critic_net.value(tape, inst, model.critic,
                                    model.input_scale, false, nullptr))
      .item();
}

double critic_value_ma(const MaModel& model, const MaInstance& inst) {
  Tape tape;
  return tape
      .value(model.critic_net.value(tape, inst, model.critic,
                                    model.input_scale, false, nullptr))
      .item();
}

void apply_bn_updates(std::vector<ParamStore*> stores,
                      const std::vector<BnBatchStats>& parts, double momentum) {
  struct Pool {
    Tensor sum, sumsq;
    double n = 0;
  };
  std::map<std::string, Pool> pools;
  for (const auto& part : parts)
    for (const auto& item : part.items) {
      Pool& p = pools[item.key];
      if (p.sum.v.empty()) {
        p.sum = Tensor(1, item.mean.cols);
        p.sumsq = Tensor(1, item.mean.cols);
      }
      for (int c = 0; c < item.mean.cols; ++c) {
        p.sum.v[c] += item.count * item.mean.v[c];
        p.sumsq.v[c] +=
            item.count * (item.var.v[c] + item.mean.v[c] * item.mean.v[c]);
      }
      p.n += item.count;
    }
  for (const auto& [key, pool] : pools) {
    if (pool.n < 2) continue;
    // key is the layer's gamma name "<...>.bn.g"; running stats sit beside it.
    std::string base = key.substr(0, key.size() - 1);
    for (ParamStore* store : stores) {
      if (!store->has(key)) continue;
      Tensor& rm = store->at(base + "rm");
      Tensor& rv = store->at(base + "rv");
      double unbias = pool.n / (pool.n - 1.0);
      for (size_t c = 0; c < rm.v.size(); ++c) {
        double mean = pool.sum.v[c] / pool.n;
        double var = pool.sumsq.v[c] / pool.n - mean * mean;
        rm.v[c] = (1.0 - momentum) * rm.v[c] + momentum * mean;
        rv.v[c] = (1.0 - momentum) * rv.v[c] + momentum * var * unbias;
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Shared training plumbing.
// ---------------------------------------------------------------------------

namespace {

struct GroupAccum {
  GradStore g_actor, g_cvln, g_critic;
  BnBatchStats bn;
  double sum_u = 0, sum_closs = 0, sum_len = 0;
  int count = 0, complete = 0;
};

std::vector<int> draw_batch(uint64_t seed, int epoch, int step, int batch,
                            int set_size) {
  RngStream rng(seed, "batch", epoch, step);
  std::vector<int> idx(batch);
  for (int i = 0; i < batch; ++i) idx[i] = rng.uniform_int(set_size);
  return idx;
}

void finish_step(const TrainConfig& cfg, std::vector<GroupAccum>& groups,
                 ParamStore& actor, ParamStore& cvln, ParamStore& critic,
                 TrainerState& state, double* step_u, double* step_closs,
                 double* step_len, int* step_count) {
  GradStore g_actor, g_cvln, g_critic;
  std::vector<BnBatchStats> bn_parts;
  double su = 0, sc = 0, sl = 0;
  int count = 0, complete = 0;
  for (auto& g : groups) {
    g_actor.merge(g.g_actor);
    g_cvln.merge(g.g_cvln);
    g_critic.merge(g.g_critic);
    bn_parts.push_back(std::move(g.bn));
    su += g.sum_u;
    sc += g.sum_closs;
    sl += g.sum_len;
    count += g.count;
    complete += g.complete;
  }
  *step_u = su;
  *step_closs = sc;
  *step_len = sl;
  *step_count = count;
  if (cfg.lr == 0.0) return;  // frozen training leaves every parameter fixed
  // Gradient ascent for utility objectives, descent for the critic loss.
  g_actor.scale(-1.0 / count);
  if (complete > 0) g_cvln.scale(-1.0 / complete);
  g_critic.scale(1.0 / count);
  g_actor.clip_global_norm(cfg.clip_norm);
  g_cvln.clip_global_norm(cfg.clip_norm);
  g_critic.clip_global_norm(cfg.clip_norm);
  state.adam_cvln.step(cvln, g_cvln, cfg.lr);
  state.adam_actor.step(actor, g_actor, cfg.lr);
  state.adam_critic.step(critic, g_critic, cfg.lr);
  apply_bn_updates({&actor, &cvln, &critic}, bn_parts);
}

}  // namespace

// ---------------------------------------------------------------------------
// Cell-free training.
// ---------------------------------------------------------------------------

namespace {

void pretrain_cf(CfModel& model, const TrainConfig& cfg,
                 const std::vector<CfInstance>& train_set,
                 TrainerState& state) {
  FeasibilityOracle oracle = cf_constraint_oracle(model.cfg);
  int bound = model.cfg.support_bound();
  for (int step = 0; step < cfg.pretrain_steps; ++step) {
    auto idx = draw_batch(cfg.seed ^ 0x9e1ULL, 0, step, cfg.batch_size,
                          static_cast<int>(train_set.size()));
    std::vector<GroupAccum> groups(cfg.grad_groups);
    parallel_for_groups(
        cfg.batch_size, cfg.grad_groups, cfg.threads,
        [&](int g, int begin, int end) {
          for (int i = begin; i < end; ++i) {
            const CfInstance& inst = train_set[idx[i]];
            RngStream rng(cfg.seed, "pretrain", 0, step, i);
            int card = 1 + rng.uniform_int(bound);
            SupportSet support = random_feasible_support(
                oracle, model.cfg.pairs(), card, rng);
            Tape tape;
            Tape::Id w = model.cvln_net.emit(tape, inst, support, model.cvln,
                                             model.input_scale, true,
                                             &groups[g].bn);
            Tape::Id rate = cf_rate_node(tape, model.cfg, inst, support, w);
            tape.backward(rate, groups[g].g_cvln);
            groups[g].sum_u += tape.value(rate).item();
            groups[g].count += 1;
            groups[g].complete += 1;
          }
        });
    double su, sc, sl;
    int count;
    finish_step(cfg, groups, model.actor, model.cvln, model.critic, state, &su,
                &sc, &sl, &count);
  }
}

}  // namespace

EvalStats validate_cf(const CfModel& model, const std::vector<CfInstance>& set,
                      int threads) {
  const int n = static_cast<int>(set.size());
  std::vector<double> rates(n, 0.0), lens(n, 0.0);
  parallel_for_groups(n, std::min(n, 64), threads, [&](int, int begin, int end) {
    for (int i = begin; i < end; ++i) {
      CfEpisode ep(model.actor_net, set[i], model.actor, model.input_scale,
                   /*training=*/false, nullptr);
      decode_cf(ep, DecodeMode::kGreedy, nullptr);
      Tape::Id w = model.cvln_net.emit(ep.tape(), set[i], ep.support(),
                                       model.cvln, model.input_scale,
                                       /*training=*/false, nullptr);
      Tape::Id rate = cf_rate_node(ep.tape(), model.cfg, set[i], ep.support(), w);
      rates[i] = ep.tape().value(rate).item();
      lens[i] = ep.support().size();
    }
  });
  EvalStats out;
  for (int i = 0; i < n; ++i) {
    out.mean_rate += rates[i];
    out.mean_assoc += lens[i] / model.cfg.support_bound();
  }
  out.mean_rate /= std::max(n, 1);
  out.mean_assoc /= std::max(n, 1);
  return out;
}

void train_cf(CfModel& model, const TrainConfig& cfg,
              const std::vector<CfInstance>& train_set,
              const std::vector<CfInstance>& val_set, TrainerState& state,
              std::vector<EpochMetrics>& metrics) {
  cfg.validate();
  if (train_set.empty()) throw ShapeError("train_cf: empty training set");
  if (state.next_epoch == 0 && cfg.pretrain && cfg.pretrain_steps > 0)
    pretrain_cf(model, cfg, train_set, state);
  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    // Validation reflects the model entering this epoch, so the first row
    // reports the untrained greedy-decode rate.
    EvalStats val = validate_cf(model, val_set, cfg.threads);
    double epoch_u = 0, epoch_closs = 0;
    int epoch_count = 0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      auto idx = draw_batch(cfg.seed, epoch, step, cfg.batch_size,
                            static_cast<int>(train_set.size()));
      std::vector<GroupAccum> groups(cfg.grad_groups);
      parallel_for_groups(
          cfg.batch_size, cfg.grad_groups, cfg.threads,
          [&](int g, int begin, int end) {
            for (int i = begin; i < end; ++i) {
              const CfInstance& inst = train_set[idx[i]];
              RngStream rng(cfg.seed, "episode", epoch, step, i);
              CfEpisode ep(model.actor_net, inst, model.actor,
                           model.input_scale, /*training=*/true, &groups[g].bn);
              decode_cf(ep, DecodeMode::kSample, &rng);
              Tape& tape = ep.tape();
              Tape::Id w = model.cvln_net.emit(tape, inst, ep.support(),
                                               model.cvln, model.input_scale,
                                               true, &groups[g].bn);
              Tape::Id rate =
                  cf_rate_node(tape, model.cfg, inst, ep.support(), w);
              double u = tape.value(rate).item();
              Tape::Id crit = model.critic_net.value(tape, inst, model.critic,
                                                     model.input_scale, true,
                                                     &groups[g].bn);
              double u_hat = tape.value(crit).item();
              Tape::Id loss =
                  tape.square(tape.sub(crit, tape.constant_scalar(u)));
              tape.backward(ep.logp_sum_node(), groups[g].g_actor, u - u_hat);
              tape.backward(rate, groups[g].g_cvln);
              tape.backward(loss, groups[g].g_critic);
              groups[g].sum_u += u;
              groups[g].sum_closs += tape.value(loss).item();
              groups[g].sum_len += ep.support().size();
              groups[g].count += 1;
              groups[g].complete += 1;
            }
          });
      double su, sc, sl;
      int count;
      finish_step(cfg, groups, model.actor, model.cvln, model.critic, state,
                  &su, &sc, &sl, &count);
      epoch_u += su;
      epoch_closs += sc;
      epoch_count += count;
    }
    EpochMetrics row;
    row.epoch = epoch;
    row.train_rate = epoch_u / std::max(epoch_count, 1);
    row.val_rate = val.mean_rate;
    row.assoc_rate = val.mean_assoc;
    row.critic_loss = epoch_closs / std::max(epoch_count, 1);
    metrics.push_back(row);
    state.next_epoch = epoch + 1;
  }
}

// ---------------------------------------------------------------------------
// Movable-antenna training.
// ---------------------------------------------------------------------------

namespace {

void pretrain_ma(MaModel& model, const TrainConfig& cfg,
                 const std::vector<MaInstance>& train_set,
                 TrainerState& state) {
  for (int step = 0; step < cfg.pretrain_steps; ++step) {
    auto idx = draw_batch(cfg.seed ^ 0x9e1ULL, 0, step, cfg.batch_size,
                          static_cast<int>(train_set.size()));
    std::vector<GroupAccum> groups(cfg.grad_groups);
    parallel_for_groups(
        cfg.batch_size, cfg.grad_groups, cfg.threads,
        [&](int g, int begin, int end) {
          for (int i = begin; i < end; ++i) {
            const MaInstance& inst = train_set[idx[i]];
            FeasibilityOracle oracle =
                ma_constraint_oracle(model.cfg, inst.cp_pos);
            RngStream rng(cfg.seed, "pretrain", 0, step, i);
            SupportSet support = random_feasible_support(
                oracle, inst.num_cps, model.cfg.num_antennas, rng);
            Tape tape;
            auto emit = model.cvln_net.emit(tape, inst, support, model.cvln,
                                            model.input_scale, true,
                                            &groups[g].bn);
            Tape::Id rate = ma_rate_node(tape, model.cfg, inst, support, emit.w);
            tape.backward(rate, groups[g].g_cvln);
            groups[g].sum_u += tape.value(rate).item();
            groups[g].count += 1;
            groups[g].complete += 1;
          }
        });
    double su, sc, sl;
    int count;
    finish_step(cfg, groups, model.actor, model.cvln, model.critic, state, &su,
                &sc, &sl, &count);
  }
}

}  // namespace

EvalStats validate_ma(const MaModel& model, const std::vector<MaInstance>& set,
                      int threads) {
  const int n = static_cast<int>(set.size());
  std::vector<double> rates(n, 0.0), lens(n, 0.0);
  parallel_for_groups(n, std::min(n, 64), threads, [&](int, int begin, int end) {
    for (int i = begin; i < end; ++i) {
      MaEpisode ep(model.actor_net, set[i], model.actor, model.input_scale,
                   /*training=*/false, nullptr);
      try {
        decode_ma(ep, DecodeMode::kGreedy, nullptr);
      } catch (const DeadEndError&) {
        lens[i] = ep.support().size();
        continue;
      }
      auto emit = model.cvln_net.emit(ep.tape(), set[i], ep.support(),
                                      model.cvln, model.input_scale,
                                      /*training=*/false, nullptr);
      Tape::Id rate =
          ma_rate_node(ep.tape(), model.cfg, set[i], ep.support(), emit.w);
      rates[i] = ep.tape().value(rate).item();
      lens[i] = ep.support().size();
    }
  });
  EvalStats out;
  for (int i = 0; i < n; ++i) {
    out.mean_rate += rates[i];
    out.mean_assoc += lens[i] / model.cfg.num_antennas;
  }
  out.mean_rate /= std::max(n, 1);
  out.mean_assoc /= std::max(n, 1);
  return out;
}

void train_ma(MaModel& model, const TrainConfig& cfg,
              const std::vector<MaInstance>& train_set,
              const std::vector<MaInstance>& val_set, TrainerState& state,
              std::vector<EpochMetrics>& metrics) {
  cfg.validate();
  if (train_set.empty()) throw ShapeError("train_ma: empty training set");
  if (state.next_epoch == 0 && cfg.pretrain && cfg.pretrain_steps > 0)
    pretrain_ma(model, cfg, train_set, state);
  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    EvalStats val = validate_ma(model, val_set, cfg.threads);
    double epoch_u = 0, epoch_closs = 0;
    int epoch_count = 0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      auto idx = draw_batch(cfg.seed, epoch, step, cfg.batch_size,
                            static_cast<int>(train_set.size()));
      std::vector<GroupAccum> groups(cfg.grad_groups);
      parallel_for_groups(
          cfg.batch_size, cfg.grad_groups, cfg.threads,
          [&](int g, int begin, int end) {
            for (int i = begin; i < end; ++i) {
              const MaInstance& inst = train_set[idx[i]];
              RngStream rng(cfg.seed, "episode", epoch, step, i);
              MaEpisode ep(model.actor_net, inst, model.actor,
                           model.input_scale, /*training=*/true, &groups[g].bn);
              EpisodeTrace trace = decode_ma(ep, DecodeMode::kSample, &rng);
              Tape& tape = ep.tape();
              double u = 0.0;
              if (!trace.dead_end) {
                auto emit = model.cvln_net.emit(tape, inst, ep.support(),
                                                model.cvln, model.input_scale,
                                                true, &groups[g].bn);
                Tape::Id rate =
                    ma_rate_node(tape, model.cfg, inst, ep.support(), emit.w);
                u = tape.value(rate).item();
                tape.backward(rate, groups[g].g_cvln);
                groups[g].complete += 1;
              }
              Tape::Id crit = model.critic_net.value(tape, inst, model.critic,
                                                     model.input_scale, true,
                                                     &groups[g].bn);
              double u_hat = tape.value(crit).item();
              Tape::Id loss =
                  tape.square(tape.sub(crit, tape.constant_scalar(u)));
              if (!trace.actions.empty())
                tape.backward(ep.logp_sum_node(), groups[g].g_actor, u - u_hat);
              tape.backward(loss, groups[g].g_critic);
              groups[g].sum_u += u;
              groups[g].sum_closs += tape.value(loss).item();
              groups[g].sum_len += ep.support().size();
              groups[g].count += 1;
            }
          });
      double su, sc, sl;
      int count;
      finish_step(cfg, groups, model.actor, model.cvln, model.critic, state,
                  &su, &sc, &sl, &count);
      epoch_u += su;
      epoch_closs += sc;
      epoch_count += count;
    }
    EpochMetrics row;
    row.epoch = epoch;
    row.train_rate = epoch_u / std::max(epoch_count, 1);
    row.val_rate = val.mean_rate;
    row.assoc_rate = val.mean_assoc;
    row.critic_loss = epoch_closs / std::max(epoch_count, 1);
    metrics.push_back(row);
    state.next_epoch = epoch + 1;
  }
}

// ---------------------------------------------------------------------------
// Exhaustive policy gradient.
// ---------------------------------------------------------------------------

namespace {

struct Trajectory {
  Tape::Id logp_sum = -1;  // -1 when the trajectory has no stochastic step
  double prob = 1.0;
  double utility = 0.0;
};

void enumerate_trajectories(
    MaEpisode& ep, const std::function<double(const SupportSet&)>& utility,
    std::vector<Trajectory>& out) {
  if (ep.finished()) {
    Trajectory tr;
    tr.logp_sum = ep.trace().actions.empty() ? -1 : ep.logp_sum_node();
    tr.prob = std::exp(ep.trace().logp_sum());
    tr.utility = utility(ep.support());
    out.push_back(tr);
    return;
  }
  auto dist = ep.step_dist();
  if (!dist.has_value()) {  // dead end: terminal with zero utility
    Trajectory tr;
    tr.logp_sum = ep.trace().actions.empty() ? -1 : ep.logp_sum_node();
    tr.prob = std::exp(ep.trace().logp_sum());
    tr.utility = 0.0;
    out.push_back(tr);
    return;
  }
  for (int row = 0; row < static_cast<int>(dist->entries.size()); ++row) {
    if (!dist->feasible[row]) continue;
    ep.commit(*dist, row);
    enumerate_trajectories(ep, utility, out);
    ep.pop();
  }
}

}  // namespace

ExactPg exact_policy_gradient(
    const MaActor& actor, const MaInstance& inst, const ParamStore& store,
    double input_scale,
    const std::function<double(const SupportSet&)>& utility) {
  MaEpisode ep(actor, inst, store, input_scale, /*training=*/false, nullptr);
  std::vector<Trajectory> trajectories;
  enumerate_trajectories(ep, utility, trajectories);

  ExactPg res;
  res.trajectories = static_cast<int>(trajectories.size());
  Tape& tape = ep.tape();
  Tape::Id total = -1;
  for (const auto& tr : trajectories) {
    res.expected_utility += tr.prob * tr.utility;
    res.total_probability += tr.prob;
    if (tr.logp_sum < 0) continue;
    Tape::Id term =
        tape.scale_shift(tape.exp_(tr.logp_sum), tr.utility, 0.0);
    total = total < 0 ? term : tape.add(total, term);
    tape.backward(tr.logp_sum, res.score, tr.prob * tr.utility);
    tape.backward(tr.logp_sum, res.score_mean, tr.prob);
  }
  if (total >= 0) tape.backward(total, res.direct);
  return res;
}

}  // namespace mdra
