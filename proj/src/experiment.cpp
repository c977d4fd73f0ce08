#include "mdra/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mdra {

using nlohmann::json;

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig cfg;
  maybe(j, "scenario", cfg.scenario);
  if (cfg.scenario != "cf" && cfg.scenario != "ma")
    throw FormatError("config: scenario must be \"cf\" or \"ma\"");
  maybe(j, "p_max_dbm", cfg.p_max_dbm);
  maybe(j, "noise_dbm", cfg.noise_dbm);
  if (j.contains("cf")) {
    const json& c = j.at("cf");
    maybe(c, "num_aps", cfg.cf.num_aps);
    maybe(c, "num_ues", cfg.cf.num_ues);
    maybe(c, "antennas", cfg.cf.antennas);
    maybe(c, "k_max", cfg.cf.k_max);
    maybe(c, "l_max", cfg.cf.l_max);
    maybe(c, "area_m", cfg.cf.area_m);
  }
  if (j.contains("ma")) {
    const json& c = j.at("ma");
    maybe(c, "grid_side", cfg.ma.grid_side);
    maybe(c, "num_antennas", cfg.ma.num_antennas);
    maybe(c, "num_ues", cfg.ma.num_ues);
    maybe(c, "wavelength_m", cfg.ma.wavelength_m);
    maybe(c, "region_factor", cfg.ma.region_factor);
    maybe(c, "d_min_m", cfg.ma.d_min_m);
    maybe(c, "num_paths", cfg.ma.num_paths);
    maybe(c, "l0_db", cfg.ma.l0_db);
    maybe(c, "alpha", cfg.ma.alpha);
    maybe(c, "ue_dist_min_m", cfg.ma.ue_dist_min_m);
    maybe(c, "ue_dist_max_m", cfg.ma.ue_dist_max_m);
  }
  if (j.contains("actor")) {
    const json& c = j.at("actor");
    maybe(c, "d_h", cfg.actor_hp.d_h);
    maybe(c, "mlp_hidden", cfg.actor_hp.mlp_hidden);
    maybe(c, "enc_layers", cfg.actor_hp.enc_layers);
    maybe(c, "ctx_layers", cfg.actor_hp.ctx_layers);
    maybe(c, "mha_heads", cfg.actor_hp.mha_heads);
    maybe(c, "clip_c", cfg.actor_hp.clip_c);
  }
  if (j.contains("cvln")) {
    const json& c = j.at("cvln");
    maybe(c, "d", cfg.cvln_hp.d);
    maybe(c, "mlp_hidden", cfg.cvln_hp.mlp_hidden);
    maybe(c, "layers", cfg.cvln_hp.layers);
  }
  if (j.contains("critic")) {
    const json& c = j.at("critic");
    maybe(c, "d", cfg.critic_hp.d);
    maybe(c, "mlp_hidden", cfg.critic_hp.mlp_hidden);
    maybe(c, "layers", cfg.critic_hp.layers);
  }
  if (j.contains("train")) {
    const json& c = j.at("train");
    maybe(c, "epochs", cfg.train.epochs);
    maybe(c, "steps_per_epoch", cfg.train.steps_per_epoch);
    maybe(c, "batch_size", cfg.train.batch_size);
    maybe(c, "lr", cfg.train.lr);
    maybe(c, "pretrain", cfg.train.pretrain);
    maybe(c, "pretrain_steps", cfg.train.pretrain_steps);
    maybe(c, "clip_norm", cfg.train.clip_norm);
    maybe(c, "threads", cfg.train.threads);
  }
  if (j.contains("data")) {
    const json& c = j.at("data");
    maybe(c, "train", cfg.n_train);
    maybe(c, "val", cfg.n_val);
    maybe(c, "test", cfg.n_test);
  }
  // Powers arrive in dBm and live in watts internally.
  cfg.cf.p_max_w = dbm_to_watts(cfg.p_max_dbm);
  cfg.cf.noise_w = dbm_to_watts(cfg.noise_dbm);
  cfg.ma.p_max_w = dbm_to_watts(cfg.p_max_dbm);
  cfg.ma.noise_w = dbm_to_watts(cfg.noise_dbm);
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["scenario"] = scenario;
  j["p_max_dbm"] = p_max_dbm;
  j["noise_dbm"] = noise_dbm;
  j["cf"] = {{"num_aps", cf.num_aps},   {"num_ues", cf.num_ues},
             {"antennas", cf.antennas}, {"k_max", cf.k_max},
             {"l_max", cf.l_max},       {"area_m", cf.area_m}};
  j["ma"] = {{"grid_side", ma.grid_side},
             {"num_antennas", ma.num_antennas},
             {"num_ues", ma.num_ues},
             {"wavelength_m", ma.wavelength_m},
             {"region_factor", ma.region_factor},
             {"d_min_m", ma.d_min_m},
             {"num_paths", ma.num_paths},
             {"l0_db", ma.l0_db},
             {"alpha", ma.alpha},
             {"ue_dist_min_m", ma.ue_dist_min_m},
             {"ue_dist_max_m", ma.ue_dist_max_m}};
  j["actor"] = {{"d_h", actor_hp.d_h},
                {"mlp_hidden", actor_hp.mlp_hidden},
                {"enc_layers", actor_hp.enc_layers},
                {"ctx_layers", actor_hp.ctx_layers},
                {"mha_heads", actor_hp.mha_heads},
                {"clip_c", actor_hp.clip_c}};
  j["cvln"] = {{"d", cvln_hp.d},
               {"mlp_hidden", cvln_hp.mlp_hidden},
               {"layers", cvln_hp.layers}};
  j["critic"] = {{"d", critic_hp.d},
                 {"mlp_hidden", critic_hp.mlp_hidden},
                 {"layers", critic_hp.layers}};
  j["train"] = {{"epochs", train.epochs},
                {"steps_per_epoch", train.steps_per_epoch},
                {"batch_size", train.batch_size},
                {"lr", train.lr},
                {"pretrain", train.pretrain},
                {"pretrain_steps", train.pretrain_steps},
                {"clip_norm", train.clip_norm},
                {"threads", train.threads}};
  j["data"] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
  return j.dump(2);
}

uint64_t ExperimentConfig::hash() const {
  json j;
  j["scenario"] = scenario;
  j["p_max_dbm"] = p_max_dbm;
  j["noise_dbm"] = noise_dbm;
  if (is_cf()) {
    j["dims"] = {cf.num_aps, cf.num_ues, cf.antennas, cf.k_max, cf.l_max};
    j["area_m"] = cf.area_m;
  } else {
    j["dims"] = {ma.grid_side, ma.num_antennas, ma.num_ues, ma.num_paths};
    j["phys"] = {ma.wavelength_m, ma.region_factor, ma.d_min_m, ma.l0_db,
                 ma.alpha, ma.ue_dist_min_m, ma.ue_dist_max_m};
  }
  j["actor"] = {actor_hp.d_h, actor_hp.mlp_hidden, actor_hp.enc_layers,
                actor_hp.ctx_layers, actor_hp.mha_heads, actor_hp.clip_c};
  j["cvln"] = {cvln_hp.d, cvln_hp.mlp_hidden, cvln_hp.layers};
  j["critic"] = {critic_hp.d, critic_hp.mlp_hidden, critic_hp.layers};
  return fnv1a64(j.dump());
}

CfModel make_cf_model(const ExperimentConfig& cfg) {
  return CfModel(cfg.cf, cfg.actor_hp, cfg.cvln_hp, cfg.critic_hp);
}
MaModel make_ma_model(const ExperimentConfig& cfg) {
  return MaModel(cfg.ma, cfg.actor_hp, cfg.cvln_hp, cfg.critic_hp);
}

// ---------------------------------------------------------------------------
// Checkpoint packing.
// ---------------------------------------------------------------------------

namespace {

void pack_store(CheckpointFile& out, const std::string& prefix,
                const ParamStore& store) {
  for (const auto& [name, entry] : store)
    out.add_tensor(prefix + name, entry.value, entry.trainable);
}

void pack_adam(CheckpointFile& out, const std::string& prefix,
               const AdamState& adam) {
  out.add_scalar(prefix + "t", static_cast<double>(adam.t));
  for (const auto& [name, t] : adam.m) out.add_tensor(prefix + "m/" + name, t, false);
  for (const auto& [name, t] : adam.v) out.add_tensor(prefix + "v/" + name, t, false);
}

void unpack_store(const CheckpointFile& in, const std::string& prefix,
                  ParamStore& store) {
  for (auto& [name, entry] : store) {
    const NamedArray* a = in.find(prefix + name);
    if (!a || a->rows != entry.value.rows || a->cols != entry.value.cols)
      throw FormatError("checkpoint: missing or mis-shaped array " + prefix +
                        name);
    entry.value.v = a->data;
  }
}

void unpack_adam(const CheckpointFile& in, const std::string& prefix,
                 AdamState& adam, const ParamStore& ref) {
  adam.t = static_cast<int64_t>(in.scalar(prefix + "t"));
  adam.m.clear();
  adam.v.clear();
  for (const auto& [name, entry] : ref) {
    if (!entry.trainable) continue;
    const NamedArray* am = in.find(prefix + "m/" + name);
    const NamedArray* av = in.find(prefix + "v/" + name);
    if (am) adam.m.emplace(name, Tensor(am->rows, am->cols, am->data));
    if (av) adam.v.emplace(name, Tensor(av->rows, av->cols, av->data));
  }
}

void check_hash(const CheckpointFile& ckpt, const ExperimentConfig& cfg) {
  if (ckpt.config_hash != cfg.hash())
    throw FormatError("checkpoint: config hash mismatch");
}

}  // namespace

CheckpointFile pack_cf_checkpoint(const ExperimentConfig& cfg,
                                  const CfModel& model,
                                  const TrainerState& state) {
  CheckpointFile out;
  out.config_hash = cfg.hash();
  out.add_scalar("meta/input_scale", model.input_scale);
  out.add_scalar("meta/next_epoch", state.next_epoch);
  pack_store(out, "actor/", model.actor);
  pack_store(out, "cvln/", model.cvln);
  pack_store(out, "critic/", model.critic);
  pack_adam(out, "adam.actor/", state.adam_actor);
  pack_adam(out, "adam.cvln/", state.adam_cvln);
  pack_adam(out, "adam.critic/", state.adam_critic);
  return out;
}

CheckpointFile pack_ma_checkpoint(const ExperimentConfig& cfg,
                                  const MaModel& model,
                                  const TrainerState& state) {
  CheckpointFile out;
  out.config_hash = cfg.hash();
  out.add_scalar("meta/input_scale", model.input_scale);
  out.add_scalar("meta/next_epoch", state.next_epoch);
  pack_store(out, "actor/", model.actor);
  pack_store(out, "cvln/", model.cvln);
  pack_store(out, "critic/", model.critic);
  pack_adam(out, "adam.actor/", state.adam_actor);
  pack_adam(out, "adam.cvln/", state.adam_cvln);
  pack_adam(out, "adam.critic/", state.adam_critic);
  return out;
}

void unpack_cf_checkpoint(const CheckpointFile& ckpt,
                          const ExperimentConfig& cfg, CfModel& model,
                          TrainerState& state) {
  check_hash(ckpt, cfg);
  model.input_scale = ckpt.scalar("meta/input_scale");
  state.next_epoch = static_cast<int>(ckpt.scalar("meta/next_epoch"));
  unpack_store(ckpt, "actor/", model.actor);
  unpack_store(ckpt, "cvln/", model.cvln);
  unpack_store(ckpt, "critic/", model.critic);
  unpack_adam(ckpt, "adam.actor/", state.adam_actor, model.actor);
  unpack_adam(ckpt, "adam.cvln/", state.adam_cvln, model.cvln);
  unpack_adam(ckpt, "adam.critic/", state.adam_critic, model.critic);
}

void unpack_ma_checkpoint(const CheckpointFile& ckpt,
                          const ExperimentConfig& cfg, MaModel& model,
                          TrainerState& state) {
  check_hash(ckpt, cfg);
  model.input_scale = ckpt.scalar("meta/input_scale");
  state.next_epoch = static_cast<int>(ckpt.scalar("meta/next_epoch"));
  unpack_store(ckpt, "actor/", model.actor);
  unpack_store(ckpt, "cvln/", model.cvln);
  unpack_store(ckpt, "critic/", model.critic);
  unpack_adam(ckpt, "adam.actor/", state.adam_actor, model.actor);
  unpack_adam(ckpt, "adam.cvln/", state.adam_cvln, model.cvln);
  unpack_adam(ckpt, "adam.critic/", state.adam_critic, model.critic);
}

// ---------------------------------------------------------------------------
// Benchmark evaluation.
// ---------------------------------------------------------------------------

namespace {

struct Sample {
  double rate = 0;
  double wall_ms = 0;
  bool feasible = false;
};

ResultRow summarize(const std::string& method, double p_max_dbm,
                    const std::vector<Sample>& samples) {
  ResultRow row;
  row.method = method;
  row.p_max_dbm = p_max_dbm;
  const int n = static_cast<int>(samples.size());
  for (const auto& s : samples) {
    row.mean_rate += s.rate;
    row.mean_wall_ms += s.wall_ms;
    row.feasibility += s.feasible ? 1.0 : 0.0;
  }
  row.mean_rate /= std::max(n, 1);
  row.mean_wall_ms /= std::max(n, 1);
  row.feasibility /= std::max(n, 1);
  double ss = 0;
  for (const auto& s : samples) {
    double d = s.rate - row.mean_rate;
    ss += d * d;
  }
  row.std_err = n > 1 ? std::sqrt(ss / (n - 1)) / std::sqrt(double(n)) : 0.0;
  return row;
}

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

std::vector<ResultRow> eval_cf(const ExperimentConfig& cfg, const CfModel& model,
                               const std::vector<CfInstance>& test,
                               const std::vector<std::string>& methods,
                               uint64_t seed, int brute_budget) {
  (void)seed;
  FeasibilityOracle oracle = cf_constraint_oracle(cfg.cf);
  WmmseConfig wcfg;
  std::vector<ResultRow> rows;
  for (const auto& method : methods) {
    std::vector<Sample> samples(test.size());
    for (size_t i = 0; i < test.size(); ++i) {
      const CfInstance& inst = test[i];
      Sample& s = samples[i];
      if (method == "learned") {
        auto t0 = Clock::now();
        CfEpisode ep(model.actor_net, inst, model.actor, model.input_scale,
                     /*training=*/false, nullptr);
        decode_cf(ep, DecodeMode::kGreedy, nullptr);
        Tape::Id w = model.cvln_net.emit(ep.tape(), inst, ep.support(),
                                         model.cvln, model.input_scale,
                                         /*training=*/false, nullptr);
        Tape::Id rate = cf_rate_node(ep.tape(), cfg.cf, inst, ep.support(), w);
        s.wall_ms = ms_since(t0);
        s.rate = ep.tape().value(rate).item();
        s.feasible =
            oracle.feasible_final(assignment_from_support(ep.support()));
      } else if (method == "greedy_wmmse") {
        auto t0 = Clock::now();
        SupportSet assoc = greedy_association(cfg.cf, inst);
        CfWmmseResult r = wmmse_cf(cfg.cf, inst, assoc, wcfg);
        s.wall_ms = ms_since(t0);
        s.rate = r.rate_per_iter.back();
        s.feasible = oracle.feasible_final(assignment_from_support(assoc));
      } else if (method == "brute_force") {
        auto t0 = Clock::now();
        auto solver = [&](const SupportSet& sup) {
          return wmmse_cf(cfg.cf, inst, sup, wcfg).rate_per_iter.back();
        };
        BruteForceResult r =
            brute_force_joint_cf(cfg.cf, inst, oracle, solver, brute_budget);
        s.wall_ms = ms_since(t0);
        s.rate = r.rate;
        s.feasible = true;
      } else {
        throw FormatError("eval_cf: unknown method " + method);
      }
    }
    rows.push_back(summarize(method, cfg.p_max_dbm, samples));
  }
  return rows;
}

std::vector<ResultRow> eval_ma(const ExperimentConfig& cfg, const MaModel& model,
                               const std::vector<MaInstance>& test,
                               const std::vector<std::string>& methods,
                               uint64_t seed, int brute_budget) {
  WmmseConfig wcfg;
  std::vector<ResultRow> rows;
  for (const auto& method : methods) {
    std::vector<Sample> samples(test.size());
    for (size_t i = 0; i < test.size(); ++i) {
      const MaInstance& inst = test[i];
      FeasibilityOracle oracle = ma_constraint_oracle(cfg.ma, inst.cp_pos);
      Sample& s = samples[i];
      if (method == "learned") {
        auto t0 = Clock::now();
        MaEpisode ep(model.actor_net, inst, model.actor, model.input_scale,
                     /*training=*/false, nullptr);
        bool ok = true;
        try {
          decode_ma(ep, DecodeMode::kGreedy, nullptr);
        } catch (const DeadEndError&) {
          ok = false;
        }
        if (ok) {
          auto emit = model.cvln_net.emit(ep.tape(), inst, ep.support(),
                                          model.cvln, model.input_scale,
                                          /*training=*/false, nullptr);
          Tape::Id rate =
              ma_rate_node(ep.tape(), cfg.ma, inst, ep.support(), emit.w);
          s.wall_ms = ms_since(t0);
          s.rate = ep.tape().value(rate).item();
          s.feasible =
              oracle.feasible_final(assignment_from_support(ep.support()));
        } else {
          s.wall_ms = ms_since(t0);
        }
      } else if (method == "greedy_wmmse") {
        auto t0 = Clock::now();
        SupportSet pos = greedy_positioning(cfg.ma, inst);
        MaSolution sol = solve_ma_wmmse(cfg.ma, inst, pos, wcfg);
        s.wall_ms = ms_since(t0);
        s.rate = ma_sum_rate(cfg.ma, inst, sol);
        s.feasible = oracle.feasible_final(assignment_from_support(pos));
      } else if (method == "greedy_zf") {
        auto t0 = Clock::now();
        SupportSet pos = greedy_positioning(cfg.ma, inst);
        MaSolution sol = solve_ma_zf(cfg.ma, inst, pos);
        s.wall_ms = ms_since(t0);
        s.rate = ma_sum_rate(cfg.ma, inst, sol);
        s.feasible = oracle.feasible_final(assignment_from_support(pos));
      } else if (method == "random_wmmse") {
        RngStream rng(seed, "eval.random", i);
        auto t0 = Clock::now();
        SupportSet pos = random_positioning(cfg.ma, inst, rng);
        MaSolution sol = solve_ma_wmmse(cfg.ma, inst, pos, wcfg);
        s.wall_ms = ms_since(t0);
        s.rate = ma_sum_rate(cfg.ma, inst, sol);
        s.feasible = oracle.feasible_final(assignment_from_support(pos));
      } else if (method == "brute_force") {
        auto t0 = Clock::now();
        auto solver = [&](const SupportSet& sup) {
          MaSolution sol = solve_ma_wmmse(cfg.ma, inst, sup, wcfg);
          return ma_sum_rate(cfg.ma, inst, sol);
        };
        BruteForceResult r =
            brute_force_joint_ma(cfg.ma, inst, oracle, solver, brute_budget);
        s.wall_ms = ms_since(t0);
        s.rate = r.rate;
        s.feasible = true;
      } else {
        throw FormatError("eval_ma: unknown method " + method);
      }
    }
    rows.push_back(summarize(method, cfg.p_max_dbm, samples));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV and SVG emission.
// ---------------------------------------------------------------------------

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& metrics) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("metrics: cannot open " + path);
  out << "epoch,train_rate,val_rate,assoc_rate,critic_loss\n";
  out.precision(12);
  for (const auto& m : metrics)
    out << m.epoch << ',' << m.train_rate << ',' << m.val_rate << ','
        << m.assoc_rate << ',' << m.critic_loss << '\n';
}

void write_results_csv(const std::string& path,
                       const std::vector<ResultRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("results: cannot open " + path);
  out << "method,p_max_dbm,mean_rate,std_err,mean_wall_ms,feasibility_rate\n";
  out.precision(12);
  for (const auto& r : rows)
    out << r.method << ',' << r.p_max_dbm << ',' << r.mean_rate << ','
        << r.std_err << ',' << r.mean_wall_ms << ',' << r.feasibility << '\n';
}

void write_line_plot_svg(
    const std::string& path, const std::string& title,
    const std::string& xlabel, const std::string& ylabel,
    const std::vector<double>& xs,
    const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  if (xs.empty() || series.empty())
    throw ShapeError("write_line_plot_svg: empty data");
  const int w = 720, h = 480, ml = 70, mr = 160, mt = 50, mb = 60;
  double xmin = xs.front(), xmax = xs.front();
  for (double x : xs) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
  }
  double ymin = series[0].second[0], ymax = ymin;
  for (const auto& [name, ys] : series)
    for (double y : ys) {
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
  };
  auto py = [&](double y) {
    return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
  };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#ff7f0e", "#9467bd", "#8c564b"};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("svg: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-size=\"16\">" << title << "</text>\n";
  // Axes with five ticks each.
  out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  out.precision(4);
  for (int i = 0; i <= 4; ++i) {
    double xv = xmin + (xmax - xmin) * i / 4;
    double yv = ymin + (ymax - ymin) * i / 4;
    out << "<text x=\"" << px(xv) << "\" y=\"" << h - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << xv << "</text>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << yv << "</text>\n";
  }
  out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 16
      << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel
      << "</text>\n";
  out << "<text x=\"18\" y=\"" << (mt + h - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << (mt + h - mb) / 2 << ")\">" << ylabel << "</text>\n";
  out.precision(8);
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& [name, ys] = series[si];
    if (ys.size() != xs.size())
      throw ShapeError("write_line_plot_svg: series length mismatch");
    const char* color = kColors[si % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < xs.size(); ++i)
      out << px(xs[i]) << ',' << py(ys[i]) << ' ';
    out << "\"/>\n";
    for (size_t i = 0; i < xs.size(); ++i)
      out << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i])
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    int ly = mt + 18 * static_cast<int>(si);
    out << "<line x1=\"" << w - mr + 10 << "\" y1=\"" << ly << "\" x2=\""
        << w - mr + 34 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << w - mr + 40 << "\" y=\"" << ly + 4
        << "\" font-size=\"12\">" << name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace mdra
