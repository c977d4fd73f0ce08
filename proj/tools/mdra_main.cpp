#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "mdra/experiment.hpp"
#include "mdra/parallel.hpp"

namespace fs = std::filesystem;
using namespace mdra;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t comma = s.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

void gen_datasets(const ExperimentConfig& cfg, uint64_t seed,
                  const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto gen_split = [&](const char* split, int count, const std::string& path) {
    if (cfg.is_cf()) {
      std::vector<CfInstance> set(count);
      parallel_for_groups(count, std::min(count, 64), cfg.train.threads,
                          [&](int, int b, int e) {
                            for (int i = b; i < e; ++i) {
                              RngStream rng(seed, split, i);
                              set[i] = sample_cf_instance(cfg.cf, rng);
                            }
                          });
      write_cf_dataset(path, cfg.cf, set, seed);
    } else {
      std::vector<MaInstance> set(count);
      parallel_for_groups(count, std::min(count, 64), cfg.train.threads,
                          [&](int, int b, int e) {
                            for (int i = b; i < e; ++i) {
                              RngStream rng(seed, split, i);
                              set[i] = sample_ma_instance(cfg.ma, rng);
                            }
                          });
      write_ma_dataset(path, cfg.ma, set, seed);
    }
    std::cout << "wrote " << path << " (" << count << " samples)\n";
  };
  gen_split("gen.train", cfg.n_train, out_dir + "/train.mdra");
  gen_split("gen.val", cfg.n_val, out_dir + "/val.mdra");
  gen_split("gen.test", cfg.n_test, out_dir + "/test.mdra");
}

int run_train(const ExperimentConfig& base, uint64_t seed,
              const std::string& data_dir, const std::string& out_dir,
              const std::string& resume, int threads) {
  ExperimentConfig cfg = base;
  cfg.train.seed = seed;
  if (threads >= 0) cfg.train.threads = threads;
  fs::create_directories(out_dir);
  std::vector<EpochMetrics> metrics;
  if (cfg.is_cf()) {
    auto train_set = read_cf_dataset(data_dir + "/train.mdra", cfg.cf);
    auto val_set = read_cf_dataset(data_dir + "/val.mdra", cfg.cf);
    CfModel model = make_cf_model(cfg);
    model.init_params(seed);
    model.input_scale = compute_input_scale_cf(train_set);
    TrainerState state;
    if (!resume.empty())
      unpack_cf_checkpoint(read_checkpoint(resume), cfg, model, state);
    train_cf(model, cfg.train, train_set, val_set, state, metrics);
    write_checkpoint(out_dir + "/model.ckpt",
                     pack_cf_checkpoint(cfg, model, state));
  } else {
    auto train_set = read_ma_dataset(data_dir + "/train.mdra", cfg.ma);
    auto val_set = read_ma_dataset(data_dir + "/val.mdra", cfg.ma);
    MaModel model = make_ma_model(cfg);
    model.init_params(seed);
    model.input_scale = compute_input_scale_ma(train_set);
    TrainerState state;
    if (!resume.empty())
      unpack_ma_checkpoint(read_checkpoint(resume), cfg, model, state);
    train_ma(model, cfg.train, train_set, val_set, state, metrics);
    write_checkpoint(out_dir + "/model.ckpt",
                     pack_ma_checkpoint(cfg, model, state));
  }
  write_metrics_csv(out_dir + "/metrics.csv", metrics);
  if (!metrics.empty())
    std::cout << "final epoch " << metrics.back().epoch
              << ": val_rate=" << metrics.back().val_rate
              << " assoc_rate=" << metrics.back().assoc_rate << "\n";
  std::cout << "wrote " << out_dir << "/model.ckpt and metrics.csv\n";
  return 0;
}

std::vector<ResultRow> run_eval_rows(const ExperimentConfig& cfg,
                                     const std::string& ckpt_path,
                                     const std::string& data_path,
                                     const std::vector<std::string>& methods,
                                     uint64_t seed) {
  CheckpointFile ckpt = read_checkpoint(ckpt_path);
  TrainerState state;
  if (cfg.is_cf()) {
    auto test = read_cf_dataset(data_path, cfg.cf);
    CfModel model = make_cf_model(cfg);
    model.init_params(0);
    unpack_cf_checkpoint(ckpt, cfg, model, state);
    return eval_cf(cfg, model, test, methods, seed);
  }
  auto test = read_ma_dataset(data_path, cfg.ma);
  MaModel model = make_ma_model(cfg);
  model.init_params(0);
  unpack_ma_checkpoint(ckpt, cfg, model, state);
  return eval_ma(cfg, model, test, methods, seed);
}

void print_rows(const std::vector<ResultRow>& rows) {
  std::printf("%-14s %10s %12s %10s %12s %12s\n", "method", "p_max_dbm",
              "mean_rate", "std_err", "wall_ms", "feasibility");
  for (const auto& r : rows)
    std::printf("%-14s %10.2f %12.4f %10.4f %12.4f %12.4f\n", r.method.c_str(),
                r.p_max_dbm, r.mean_rate, r.std_err, r.mean_wall_ms,
                r.feasibility);
}

int run_check(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "cannot open " << path << "\n";
    return 1;
  }
  char magic[5] = {0};
  in.read(magic, 5);
  in.close();
  if (std::memcmp(magic, "MDRA1", 5) == 0) {
    DatasetHeader h = read_dataset_header(path);
    size_t expect = h.sample_doubles() * h.sample_count * sizeof(double) + 45;
    size_t actual = fs::file_size(path);
    std::cout << "dataset: scenario="
              << (h.scenario == DatasetHeader::kScenarioCf ? "cf" : "ma")
              << " dims=[" << h.dims[0] << "," << h.dims[1] << "," << h.dims[2]
              << "] samples=" << h.sample_count << " seed=" << h.seed << "\n";
    if (actual != expect) {
      std::cerr << "payload length mismatch: expected " << expect << " got "
                << actual << "\n";
      return 1;
    }
    std::cout << "payload length OK (" << actual << " bytes)\n";
    return 0;
  }
  if (std::memcmp(magic, "MDRC1", 5) == 0) {
    CheckpointFile ckpt = read_checkpoint(path);
    size_t values = 0;
    for (const auto& a : ckpt.arrays) values += a.data.size();
    std::cout << "checkpoint: config_hash=" << ckpt.config_hash
              << " arrays=" << ckpt.arrays.size() << " values=" << values
              << "\n";
    return 0;
  }
  std::cerr << "unknown file magic\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-discrete wireless resource allocation benchmark"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", data_dir, data_path, resume;
  std::string methods_csv = "learned,greedy_wmmse";
  std::string file_path, axis = "pmax", values_csv, ckpts_csv, configs_csv,
              datasets_csv;
  uint64_t seed = 0;
  int threads = -1;

  auto* gen = app.add_subcommand("gen", "Generate train/val/test datasets");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--seed", seed);
  gen->add_option("--out", out_dir);
  gen->add_option("--threads", threads);

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path)->required();
  train->add_option("--seed", seed);
  train->add_option("--data", data_dir)->required();
  train->add_option("--out", out_dir);
  train->add_option("--resume", resume);
  train->add_option("--threads", threads);

  auto* eval = app.add_subcommand("eval", "Benchmark methods on a test set");
  eval->add_option("--config", config_path)->required();
  eval->add_option("--ckpt", resume)->required();
  eval->add_option("--data", data_path)->required();
  eval->add_option("--methods", methods_csv);
  eval->add_option("--seed", seed);
  eval->add_option("--out", out_dir);

  auto* sweep = app.add_subcommand("sweep", "Evaluate across an axis");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--axis", axis)->check(CLI::IsMember({"pmax", "m", "n"}));
  sweep->add_option("--values", values_csv)->required();
  sweep->add_option("--ckpts", ckpts_csv)->required();
  sweep->add_option("--configs", configs_csv);
  sweep->add_option("--datasets", datasets_csv);
  sweep->add_option("--data", data_path);
  sweep->add_option("--methods", methods_csv);
  sweep->add_option("--seed", seed);
  sweep->add_option("--out", out_dir);

  auto* check = app.add_subcommand("check", "Validate a dataset or checkpoint");
  check->add_option("--file", file_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
      if (threads >= 0) cfg.train.threads = threads;
      gen_datasets(cfg, seed, out_dir);
      return 0;
    }
    if (train->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
      return run_train(cfg, seed, data_dir, out_dir, resume, threads);
    }
    if (eval->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
      auto rows =
          run_eval_rows(cfg, resume, data_path, split_list(methods_csv), seed);
      fs::create_directories(out_dir);
      write_results_csv(out_dir + "/results.csv", rows);
      print_rows(rows);
      std::cout << "wrote " << out_dir << "/results.csv\n";
      return 0;
    }
    if (sweep->parsed()) {
      ExperimentConfig base = ExperimentConfig::from_file(config_path);
      auto values = split_list(values_csv);
      auto ckpts = split_list(ckpts_csv);
      auto cfg_files = configs_csv.empty() ? std::vector<std::string>{}
                                           : split_list(configs_csv);
      auto datasets = datasets_csv.empty() ? std::vector<std::string>{}
                                           : split_list(datasets_csv);
      if (ckpts.size() != values.size())
        throw FormatError("sweep: one checkpoint per axis value required");
      auto methods = split_list(methods_csv);
      std::vector<ResultRow> all;
      std::vector<double> xs;
      std::map<std::string, std::vector<double>> series;
      for (size_t i = 0; i < values.size(); ++i) {
        double v = std::stod(values[i]);
        ExperimentConfig cfg = base;
        if (axis == "pmax") {
          cfg.p_max_dbm = v;
          cfg.cf.p_max_w = dbm_to_watts(v);
          cfg.ma.p_max_w = dbm_to_watts(v);
        } else {
          if (i >= cfg_files.size())
            throw FormatError("sweep: m/n axes need --configs per value");
          cfg = ExperimentConfig::from_file(cfg_files[i]);
        }
        std::string data = data_path;
        if (!datasets.empty()) data = datasets[i];
        if (data.empty())
          throw FormatError("sweep: provide --data or --datasets");
        auto rows = run_eval_rows(cfg, ckpts[i], data, methods, seed);
        xs.push_back(v);
        for (auto& r : rows) {
          series[r.method].push_back(r.mean_rate);
          all.push_back(r);
        }
      }
      fs::create_directories(out_dir);
      write_results_csv(out_dir + "/sweep.csv", all);
      std::vector<std::pair<std::string, std::vector<double>>> plot_series(
          series.begin(), series.end());
      std::string xlabel = axis == "pmax" ? "P_max (dBm)" : axis;
      write_line_plot_svg(out_dir + "/sweep_rate.svg", "Sum rate vs " + xlabel,
                          xlabel, "sum rate (bits/s/Hz)", xs, plot_series);
      print_rows(all);
      std::cout << "wrote " << out_dir << "/sweep.csv and sweep_rate.svg\n";
      return 0;
    }
    if (check->parsed()) return run_check(file_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
