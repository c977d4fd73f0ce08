#include "mdra/dataset.hpp"

#include <cstring>
#include <fstream>

#include "mdra/errors.hpp"

namespace mdra {

namespace {

void write_raw(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw FormatError("dataset: write failure");
}

void read_raw(std::ifstream& in, void* p, size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw FormatError("dataset: truncated file");
}

void write_header(std::ofstream& out, const DatasetHeader& h) {
  write_raw(out, DatasetHeader::kMagic, 5);
  write_raw(out, &h.version, 4);
  write_raw(out, &h.scenario, 4);
  write_raw(out, h.dims, 16);
  write_raw(out, &h.sample_count, 8);
  write_raw(out, &h.seed, 8);
}

DatasetHeader read_header(std::ifstream& in) {
  char magic[5];
  read_raw(in, magic, 5);
  if (std::memcmp(magic, DatasetHeader::kMagic, 5) != 0)
    throw FormatError("dataset: bad magic");
  DatasetHeader h;
  read_raw(in, &h.version, 4);
  if (h.version != DatasetHeader::kVersion)
    throw FormatError("dataset: unsupported version");
  read_raw(in, &h.scenario, 4);
  read_raw(in, h.dims, 16);
  read_raw(in, &h.sample_count, 8);
  read_raw(in, &h.seed, 8);
  return h;
}

}  // namespace

size_t DatasetHeader::sample_doubles() const {
  if (scenario == kScenarioCf) {
    uint64_t k = dims[0], l = dims[1], m = dims[2];
    return static_cast<size_t>(l * 2 + k * 2 + k * l * m * 2);
  }
  if (scenario == kScenarioMa) {
    uint64_t k = dims[0], n = dims[1];
    return static_cast<size_t>(n * 2 + k * n * 2);
  }
  throw FormatError("dataset: unknown scenario id");
}

void write_cf_dataset(const std::string& path, const CfConfig& cfg,
                      const std::vector<CfInstance>& samples, uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("dataset: cannot open " + path);
  DatasetHeader h;
  h.scenario = DatasetHeader::kScenarioCf;
  h.dims[0] = static_cast<uint32_t>(cfg.num_ues);
  h.dims[1] = static_cast<uint32_t>(cfg.num_aps);
  h.dims[2] = static_cast<uint32_t>(cfg.antennas);
  h.sample_count = samples.size();
  h.seed = seed;
  write_header(out, h);
  std::vector<double> buf(h.sample_doubles());
  for (const auto& inst : samples) {
    size_t o = 0;
    for (const auto& p : inst.ap_pos) {
      buf[o++] = p[0];
      buf[o++] = p[1];
    }
    for (const auto& p : inst.ue_pos) {
      buf[o++] = p[0];
      buf[o++] = p[1];
    }
    for (int pr = 0; pr < cfg.pairs(); ++pr)
      for (int m = 0; m < cfg.antennas; ++m) {
        buf[o++] = inst.channels(m, pr).real();
        buf[o++] = inst.channels(m, pr).imag();
      }
    write_raw(out, buf.data(), buf.size() * sizeof(double));
  }
}

std::vector<CfInstance> read_cf_dataset(const std::string& path,
                                        const CfConfig& cfg,
                                        DatasetHeader* header_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("dataset: cannot open " + path);
  DatasetHeader h = read_header(in);
  if (h.scenario != DatasetHeader::kScenarioCf)
    throw FormatError("dataset: not a cell-free dataset");
  if (h.dims[0] != static_cast<uint32_t>(cfg.num_ues) ||
      h.dims[1] != static_cast<uint32_t>(cfg.num_aps) ||
      h.dims[2] != static_cast<uint32_t>(cfg.antennas))
    throw FormatError("dataset: dimensions do not match the configuration");
  if (header_out) *header_out = h;
  std::vector<CfInstance> out(h.sample_count);
  std::vector<double> buf(h.sample_doubles());
  for (auto& inst : out) {
    read_raw(in, buf.data(), buf.size() * sizeof(double));
    inst.num_ues = cfg.num_ues;
    inst.num_aps = cfg.num_aps;
    inst.antennas = cfg.antennas;
    inst.ap_pos.resize(cfg.num_aps);
    inst.ue_pos.resize(cfg.num_ues);
    inst.channels = CMat(cfg.antennas, cfg.pairs());
    size_t o = 0;
    for (auto& p : inst.ap_pos) {
      p[0] = buf[o++];
      p[1] = buf[o++];
    }
    for (auto& p : inst.ue_pos) {
      p[0] = buf[o++];
      p[1] = buf[o++];
    }
    for (int pr = 0; pr < cfg.pairs(); ++pr)
      for (int m = 0; m < cfg.antennas; ++m) {
        double re = buf[o++];
        double im = buf[o++];
        inst.channels(m, pr) = {re, im};
      }
  }
  return out;
}

void write_ma_dataset(const std::string& path, const MaConfig& cfg,
                      const std::vector<MaInstance>& samples, uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("dataset: cannot open " + path);
  DatasetHeader h;
  h.scenario = DatasetHeader::kScenarioMa;
  h.dims[0] = static_cast<uint32_t>(cfg.num_ues);
  h.dims[1] = static_cast<uint32_t>(cfg.num_cps());
  h.sample_count = samples.size();
  h.seed = seed;
  write_header(out, h);
  std::vector<double> buf(h.sample_doubles());
  for (const auto& inst : samples) {
    size_t o = 0;
    for (const auto& p : inst.cp_pos) {
      buf[o++] = p[0];
      buf[o++] = p[1];
    }
    for (int k = 0; k < cfg.num_ues; ++k)
      for (int n = 0; n < inst.num_cps; ++n) {
        buf[o++] = inst.channels(k, n).real();
        buf[o++] = inst.channels(k, n).imag();
      }
    write_raw(out, buf.data(), buf.size() * sizeof(double));
  }
}

std::vector<MaInstance> read_ma_dataset(const std::string& path,
                                        const MaConfig& cfg,
                                        DatasetHeader* header_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("dataset: cannot open " + path);
  DatasetHeader h = read_header(in);
  if (h.scenario != DatasetHeader::kScenarioMa)
    throw FormatError("dataset: not a movable-antenna dataset");
  if (h.dims[0] != static_cast<uint32_t>(cfg.num_ues) ||
      h.dims[1] != static_cast<uint32_t>(cfg.num_cps()))
    throw FormatError("dataset: dimensions do not match the configuration");
  if (header_out) *header_out = h;
  std::vector<MaInstance> out(h.sample_count);
  std::vector<double> buf(h.sample_doubles());
  for (auto& inst : out) {
    read_raw(in, buf.data(), buf.size() * sizeof(double));
    inst.num_ues = cfg.num_ues;
    inst.num_cps = cfg.num_cps();
    inst.cp_pos.resize(inst.num_cps);
    inst.channels = CMat(cfg.num_ues, inst.num_cps);
    size_t o = 0;
    for (auto& p : inst.cp_pos) {
      p[0] = buf[o++];
      p[1] = buf[o++];
    }
    for (int k = 0; k < cfg.num_ues; ++k)
      for (int n = 0; n < inst.num_cps; ++n) {
        double re = buf[o++];
        double im = buf[o++];
        inst.channels(k, n) = {re, im};
      }
  }
  return out;
}

DatasetHeader read_dataset_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("dataset: cannot open " + path);
  return read_header(in);
}

}  // namespace mdra
