#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mdra/experiment.hpp"

using namespace mdra;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mdra_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string tiny_cf_json() {
  return R"({
    "scenario": "cf",
    "p_max_dbm": 10.0,
    "noise_dbm": -100.0,
    "cf": {"num_aps": 2, "num_ues": 3, "antennas": 2, "k_max": 2, "l_max": 1, "area_m": 500.0},
    "actor": {"d_h": 8, "mlp_hidden": 8, "enc_layers": 1, "ctx_layers": 1, "mha_heads": 2},
    "cvln": {"d": 8, "mlp_hidden": 8, "layers": 1},
    "critic": {"d": 8, "mlp_hidden": 8, "layers": 1},
    "train": {"epochs": 2, "steps_per_epoch": 2, "batch_size": 4, "lr": 0.001, "threads": 1},
    "data": {"train": 8, "val": 4, "test": 4}
  })";
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("dataset: bitwise round trip and payload accounting") {
  TempDir tmp;
  SUBCASE("cell-free") {
    CfConfig cfg;
    cfg.num_aps = 2;
    cfg.num_ues = 3;
    cfg.antennas = 2;
    cfg.k_max = 2;
    cfg.l_max = 1;
    std::vector<CfInstance> set;
    for (int i = 0; i < 5; ++i) {
      RngStream rng(i, "ds_cf");
      set.push_back(sample_cf_instance(cfg, rng));
    }
    std::string path = tmp.file("cf.mdra");
    write_cf_dataset(path, cfg, set, 42);
    DatasetHeader h;
    auto back = read_cf_dataset(path, cfg, &h);
    CHECK(h.sample_count == 5);
    CHECK(h.seed == 42);
    REQUIRE(back.size() == set.size());
    for (size_t i = 0; i < set.size(); ++i) {
      CHECK(back[i].channels == set[i].channels);  // bitwise
      CHECK(back[i].ap_pos == set[i].ap_pos);
      CHECK(back[i].ue_pos == set[i].ue_pos);
    }
    // Writing the same content twice is byte-identical.
    std::string path2 = tmp.file("cf2.mdra");
    write_cf_dataset(path2, cfg, set, 42);
    CHECK(slurp(path) == slurp(path2));

    // Mismatched dimensions are rejected.
    CfConfig other = cfg;
    other.antennas = 4;
    CHECK_THROWS_AS(read_cf_dataset(path, other), FormatError);
  }
  SUBCASE("movable antenna, including the paper-scale payload size") {
    MaConfig cfg;
    cfg.grid_side = 7;  // N = 49
    cfg.num_antennas = 6;
    cfg.num_ues = 4;
    std::vector<MaInstance> set;
    for (int i = 0; i < 3; ++i) {
      RngStream rng(i, "ds_ma");
      set.push_back(sample_ma_instance(cfg, rng));
    }
    std::string path = tmp.file("ma.mdra");
    write_ma_dataset(path, cfg, set, 7);
    DatasetHeader h = read_dataset_header(path);
    // Per-sample payload: K*N complex channels + N*2 real coordinates.
    CHECK(h.sample_doubles() == 4 * 49 * 2 + 49 * 2);
    auto back = read_ma_dataset(path, cfg);
    CHECK(back[0].channels == set[0].channels);
    CHECK(back[2].cp_pos == set[2].cp_pos);
  }
  SUBCASE("paper-scale cell-free channel payload is 640 complex entries") {
    CfConfig cfg;
    cfg.num_aps = 8;
    cfg.num_ues = 20;
    cfg.antennas = 4;
    DatasetHeader h;
    h.scenario = DatasetHeader::kScenarioCf;
    h.dims[0] = cfg.num_ues;
    h.dims[1] = cfg.num_aps;
    h.dims[2] = cfg.antennas;
    size_t channel_doubles = 2ull * cfg.num_ues * cfg.num_aps * cfg.antennas;
    CHECK(channel_doubles == 2 * 640);
    CHECK(h.sample_doubles() ==
          channel_doubles + 2ull * cfg.num_aps + 2ull * cfg.num_ues);
  }
  SUBCASE("corrupted magic is rejected") {
    std::string path = tmp.file("bad.mdra");
    std::ofstream out(path, std::ios::binary);
    out << "NOPE!";
    out.close();
    CHECK_THROWS_AS(read_dataset_header(path), FormatError);
  }
}

TEST_CASE("experiment config: parsing, unit conversion, hashing") {
  ExperimentConfig cfg = ExperimentConfig::from_json_text(tiny_cf_json());
  CHECK(cfg.is_cf());
  CHECK(cfg.cf.num_aps == 2);
  CHECK(cfg.cf.p_max_w == doctest::Approx(0.01).epsilon(1e-12));   // 10 dBm
  CHECK(cfg.cf.noise_w == doctest::Approx(1e-13).epsilon(1e-12));  // -100 dBm
  CHECK(cfg.train.epochs == 2);
  CHECK(cfg.n_train == 8);

  // The hash pins the model, not the run schedule.
  ExperimentConfig other = cfg;
  other.train.epochs = 99;
  other.n_test = 12345;
  CHECK(cfg.hash() == other.hash());
  other.actor_hp.d_h = 16;
  CHECK(cfg.hash() != other.hash());

  CHECK_THROWS_AS(ExperimentConfig::from_json_text("{\"scenario\": \"xx\"}"),
                  FormatError);
}

TEST_CASE("checkpoint: round trip, hash guard, resume reproducibility") {
  TempDir tmp;
  ExperimentConfig cfg = ExperimentConfig::from_json_text(tiny_cf_json());
  RngStream srng(1, "ck_inst");
  std::vector<CfInstance> train_set, val_set;
  for (int i = 0; i < cfg.n_train; ++i)
    train_set.push_back(sample_cf_instance(cfg.cf, srng));
  for (int i = 0; i < cfg.n_val; ++i)
    val_set.push_back(sample_cf_instance(cfg.cf, srng));

  CfModel model = make_cf_model(cfg);
  model.init_params(5);
  model.input_scale = compute_input_scale_cf(train_set);
  TrainerState state;
  std::vector<EpochMetrics> metrics;
  TrainConfig tc = cfg.train;
  tc.seed = 5;
  tc.grad_groups = 4;
  train_cf(model, tc, train_set, val_set, state, metrics);

  std::string path = tmp.file("model.ckpt");
  write_checkpoint(path, pack_cf_checkpoint(cfg, model, state));
  CheckpointFile back = read_checkpoint(path);
  CHECK(back.config_hash == cfg.hash());
  CHECK(read_checkpoint_hash(path) == cfg.hash());

  CfModel loaded = make_cf_model(cfg);
  loaded.init_params(0);
  TrainerState lstate;
  unpack_cf_checkpoint(back, cfg, loaded, lstate);
  CHECK(loaded.input_scale == model.input_scale);
  CHECK(lstate.next_epoch == 2);
  for (const auto& [name, entry] : model.actor)
    CHECK(loaded.actor.at(name).v == entry.value.v);

  SUBCASE("hash mismatch is rejected") {
    ExperimentConfig other = cfg;
    other.actor_hp.d_h = 16;
    CfModel m2 = make_cf_model(other);
    m2.init_params(0);
    TrainerState s2;
    CHECK_THROWS_AS(unpack_cf_checkpoint(back, other, m2, s2), FormatError);
  }

  SUBCASE("resume reproduces a longer run exactly") {
    // Reference: 4 epochs in one go.
    CfModel ref = make_cf_model(cfg);
    ref.init_params(5);
    ref.input_scale = compute_input_scale_cf(train_set);
    TrainerState ref_state;
    std::vector<EpochMetrics> ref_metrics;
    TrainConfig tc4 = tc;
    tc4.epochs = 4;
    train_cf(ref, tc4, train_set, val_set, ref_state, ref_metrics);

    // Resumed: 2 epochs (above) + 2 more from the checkpoint.
    std::vector<EpochMetrics> more;
    train_cf(loaded, tc4, train_set, val_set, lstate, more);
    REQUIRE(more.size() == 2);
    CHECK(more[0].val_rate == ref_metrics[2].val_rate);
    CHECK(more[1].val_rate == ref_metrics[3].val_rate);
    CHECK(more[1].train_rate == ref_metrics[3].train_rate);
  }
}

TEST_CASE("eval tables: learned and baseline rows with feasibility") {
  ExperimentConfig cfg = ExperimentConfig::from_json_text(tiny_cf_json());
  RngStream srng(2, "ev_inst");
  std::vector<CfInstance> test;
  for (int i = 0; i < 4; ++i) test.push_back(sample_cf_instance(cfg.cf, srng));
  CfModel model = make_cf_model(cfg);
  model.init_params(3);
  model.input_scale = compute_input_scale_cf(test);

  auto rows = eval_cf(cfg, model, test, {"learned", "greedy_wmmse"}, 0);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "learned");
  CHECK(rows[0].feasibility == 1.0);
  CHECK(rows[1].feasibility == 1.0);
  CHECK(rows[0].mean_rate >= 0.0);
  CHECK(rows[0].p_max_dbm == 10.0);

  CHECK_THROWS_AS(eval_cf(cfg, model, test, {"nope"}, 0), FormatError);
}

TEST_CASE("csv and svg emission") {
  TempDir tmp;
  std::vector<EpochMetrics> metrics(3);
  for (int i = 0; i < 3; ++i) {
    metrics[i].epoch = i;
    metrics[i].train_rate = i * 1.5;
    metrics[i].val_rate = i * 2.0;
  }
  std::string mpath = tmp.file("metrics.csv");
  write_metrics_csv(mpath, metrics);
  std::ifstream in(mpath);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) lines += 1;
  CHECK(lines == 4);  // header + 3 rows

  std::vector<ResultRow> rows(2);
  rows[0] = {"learned", 10.0, 3.5, 0.1, 12.0, 1.0};
  rows[1] = {"greedy_wmmse", 10.0, 3.1, 0.1, 50.0, 1.0};
  std::string rpath = tmp.file("results.csv");
  write_results_csv(rpath, rows);
  CHECK(fs::file_size(rpath) > 0);

  std::string spath = tmp.file("plot.svg");
  write_line_plot_svg(spath, "sum rate", "P_max (dBm)", "rate", {0, 10, 20},
                      {{"learned", {1.0, 2.0, 3.0}},
                       {"greedy_wmmse", {0.8, 1.9, 2.4}}});
  auto svg = slurp(spath);
  CHECK(svg.size() > 200);
  CHECK(std::string(svg.begin(), svg.begin() + 4) == "<svg");
}
