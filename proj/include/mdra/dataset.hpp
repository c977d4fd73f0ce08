#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdra/scenario_cf.hpp"
#include "mdra/scenario_ma.hpp"

namespace mdra {

/// Binary dataset container: magic "MDRA1", version, scenario id, four
/// dimension slots, sample count, and the generating seed, followed by
/// little-endian float64 payload per sample (geometry, then channels with
/// interleaved re/im, row-major). Round-trips are bitwise exact.
struct DatasetHeader {
  static constexpr char kMagic[6] = "MDRA1";
  static constexpr uint32_t kVersion = 1;
  static constexpr uint32_t kScenarioCf = 1;
  static constexpr uint32_t kScenarioMa = 2;

  uint32_t version = kVersion;
  uint32_t scenario = 0;
  uint32_t dims[4] = {0, 0, 0, 0};  // cf: K, L, M; ma: K, N
  uint64_t sample_count = 0;
  uint64_t seed = 0;

  /// Payload doubles per sample.
  size_t sample_doubles() const;
};

void write_cf_dataset(const std::string& path, const CfConfig& cfg,
                      const std::vector<CfInstance>& samples, uint64_t seed);
std::vector<CfInstance> read_cf_dataset(const std::string& path,
                                        const CfConfig& cfg,
                                        DatasetHeader* header_out = nullptr);

void write_ma_dataset(const std::string& path, const MaConfig& cfg,
                      const std::vector<MaInstance>& samples, uint64_t seed);
std::vector<MaInstance> read_ma_dataset(const std::string& path,
                                        const MaConfig& cfg,
                                        DatasetHeader* header_out = nullptr);

/// Header-only inspection (used by the `check` command).
DatasetHeader read_dataset_header(const std::string& path);

}  // namespace mdra
