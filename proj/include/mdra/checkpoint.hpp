#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdra/tensor.hpp"

namespace mdra {

/// Checkpoint container: magic "MDRC1", version, config hash, then named
/// float64 arrays (parameters, optimizer moments, normalization scalars).
struct NamedArray {
  std::string name;
  int rows = 0, cols = 0;
  bool trainable = true;
  std::vector<double> data;
};

struct CheckpointFile {
  static constexpr char kMagic[6] = "MDRC1";
  static constexpr uint32_t kVersion = 1;
  uint64_t config_hash = 0;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  double scalar(const std::string& name) const;
  void add_scalar(const std::string& name, double value);
  void add_tensor(const std::string& name, const Tensor& t, bool trainable);
};

void write_checkpoint(const std::string& path, const CheckpointFile& ckpt);
CheckpointFile read_checkpoint(const std::string& path);

/// Header-only: returns the stored config hash.
uint64_t read_checkpoint_hash(const std::string& path);

}  // namespace mdra
