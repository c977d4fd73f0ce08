#include "mdra/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mdra/errors.hpp"

namespace mdra {

const NamedArray* CheckpointFile::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

double CheckpointFile::scalar(const std::string& name) const {
  const NamedArray* a = find(name);
  if (!a || a->data.size() != 1)
    throw FormatError("checkpoint: missing scalar " + name);
  return a->data[0];
}

void CheckpointFile::add_scalar(const std::string& name, double value) {
  arrays.push_back({name, 1, 1, false, {value}});
}

void CheckpointFile::add_tensor(const std::string& name, const Tensor& t,
                                bool trainable) {
  arrays.push_back({name, t.rows, t.cols, trainable, t.v});
}

namespace {
void put(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw FormatError("checkpoint: write failure");
}
void get(std::ifstream& in, void* p, size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw FormatError("checkpoint: truncated file");
}
}  // namespace

void write_checkpoint(const std::string& path, const CheckpointFile& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("checkpoint: cannot open " + path);
  put(out, CheckpointFile::kMagic, 5);
  uint32_t version = CheckpointFile::kVersion;
  put(out, &version, 4);
  put(out, &ckpt.config_hash, 8);
  uint32_t count = static_cast<uint32_t>(ckpt.arrays.size());
  put(out, &count, 4);
  for (const auto& a : ckpt.arrays) {
    uint32_t len = static_cast<uint32_t>(a.name.size());
    put(out, &len, 4);
    put(out, a.name.data(), len);
    uint32_t rows = static_cast<uint32_t>(a.rows);
    uint32_t cols = static_cast<uint32_t>(a.cols);
    uint8_t trainable = a.trainable ? 1 : 0;
    put(out, &rows, 4);
    put(out, &cols, 4);
    put(out, &trainable, 1);
    put(out, a.data.data(), a.data.size() * sizeof(double));
  }
}

CheckpointFile read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path);
  char magic[5];
  get(in, magic, 5);
  if (std::memcmp(magic, CheckpointFile::kMagic, 5) != 0)
    throw FormatError("checkpoint: bad magic");
  uint32_t version = 0;
  get(in, &version, 4);
  if (version != CheckpointFile::kVersion)
    throw FormatError("checkpoint: unsupported version");
  CheckpointFile ckpt;
  get(in, &ckpt.config_hash, 8);
  uint32_t count = 0;
  get(in, &count, 4);
  ckpt.arrays.resize(count);
  for (auto& a : ckpt.arrays) {
    uint32_t len = 0;
    get(in, &len, 4);
    a.name.resize(len);
    get(in, a.name.data(), len);
    uint32_t rows = 0, cols = 0;
    uint8_t trainable = 0;
    get(in, &rows, 4);
    get(in, &cols, 4);
    get(in, &trainable, 1);
    a.rows = static_cast<int>(rows);
    a.cols = static_cast<int>(cols);
    a.trainable = trainable != 0;
    a.data.resize(static_cast<size_t>(rows) * cols);
    get(in, a.data.data(), a.data.size() * sizeof(double));
  }
  return ckpt;
}

uint64_t read_checkpoint_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path);
  char magic[5];
  get(in, magic, 5);
  if (std::memcmp(magic, CheckpointFile::kMagic, 5) != 0)
    throw FormatError("checkpoint: bad magic");
  uint32_t version = 0;
  get(in, &version, 4);
  uint64_t hash = 0;
  get(in, &hash, 8);
  return hash;
}

}  // namespace mdra
