#pragma once

#include <string>
#include <vector>

#include "mdra/baselines.hpp"
#include "mdra/checkpoint.hpp"
#include "mdra/dataset.hpp"
#include "mdra/training.hpp"

namespace mdra {

double dbm_to_watts(double dbm);

/// Full experiment description: scenario, physical parameters (powers on the
/// CLI surface are dBm and converted to watts on load), network sizes,
/// training schedule, and dataset sizes.
struct ExperimentConfig {
  std::string scenario = "cf";  // "cf" | "ma"
  double p_max_dbm = 10.0;
  double noise_dbm = -100.0;
  CfConfig cf;
  MaConfig ma;
  DvlnHyper actor_hp;
  CvlnHyper cvln_hp;
  CriticHyper critic_hp;
  TrainConfig train;
  int n_train = 1024, n_val = 256, n_test = 256;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
  std::string to_json_text() const;

  /// Hash of the model-determining part (scenario, physics, net sizes);
  /// run parameters (schedule, dataset sizes, seed, threads) are excluded.
  uint64_t hash() const;

  bool is_cf() const { return scenario == "cf"; }
};

// Checkpoint packing: parameters, optimizer state, normalization scalar,
// epoch cursor, and the config hash.
CheckpointFile pack_cf_checkpoint(const ExperimentConfig& cfg,
                                  const CfModel& model,
                                  const TrainerState& state);
CheckpointFile pack_ma_checkpoint(const ExperimentConfig& cfg,
                                  const MaModel& model,
                                  const TrainerState& state);
void unpack_cf_checkpoint(const CheckpointFile& ckpt,
                          const ExperimentConfig& cfg, CfModel& model,
                          TrainerState& state);
void unpack_ma_checkpoint(const CheckpointFile& ckpt,
                          const ExperimentConfig& cfg, MaModel& model,
                          TrainerState& state);

CfModel make_cf_model(const ExperimentConfig& cfg);
MaModel make_ma_model(const ExperimentConfig& cfg);

/// One benchmark table row.
struct ResultRow {
  std::string method;
  double p_max_dbm = 0;
  double mean_rate = 0;
  double std_err = 0;
  double mean_wall_ms = 0;
  double feasibility = 0;  // in [0, 1]
};

/// Known method names: cf: learned, greedy_wmmse, brute_force;
/// ma: learned, greedy_wmmse, greedy_zf, random_wmmse, brute_force.
/// Unknown methods throw. Timing is per-sample wall time, single-threaded.
std::vector<ResultRow> eval_cf(const ExperimentConfig& cfg, const CfModel& model,
                               const std::vector<CfInstance>& test,
                               const std::vector<std::string>& methods,
                               uint64_t seed, int brute_budget = 10000);
std::vector<ResultRow> eval_ma(const ExperimentConfig& cfg, const MaModel& model,
                               const std::vector<MaInstance>& test,
                               const std::vector<std::string>& methods,
                               uint64_t seed, int brute_budget = 10000);

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& metrics);
void write_results_csv(const std::string& path,
                       const std::vector<ResultRow>& rows);

/// Minimal static line plot (one polyline per series).
void write_line_plot_svg(
    const std::string& path, const std::string& title,
    const std::string& xlabel, const std::string& ylabel,
    const std::vector<double>& xs,
    const std::vector<std::pair<std::string, std::vector<double>>>& series);

}  // namespace mdra
