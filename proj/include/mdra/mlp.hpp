#pragma once

#include <string>
#include <vector>

#include "mdra/tape.hpp"

namespace mdra {

struct MlpLayerSpec {
  int width = 0;
  bool batch_norm = false;
  bool relu = false;
};

/// Layer widths and per-layer flags of a feed-forward block.
struct MlpSpec {
  int in_width = 0;
  std::vector<MlpLayerSpec> layers;

  /// Two hidden layers of FC + batch-norm + ReLU, linear output.
  static MlpSpec with_batchnorm(int in, int hidden, int out) {
    return {in,
            {{hidden, true, true}, {hidden, true, true}, {out, false, false}}};
  }
  /// Two FC layers, each followed by ReLU (no normalization).
  static MlpSpec relu_only(int in, int hidden, int out) {
    return {in, {{hidden, false, true}, {out, false, true}}};
  }
  /// Single fully connected layer.
  static MlpSpec linear(int in, int out) {
    return {in, {{out, false, false}}};
  }

  int out_width() const { return layers.back().width; }
};

/// A named MLP bound to a ParamStore by prefix. Gradients flow through the
/// tape; batch-norm layers keep running statistics as non-trainable entries.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, MlpSpec spec)
      : prefix_(std::move(prefix)), spec_(std::move(spec)) {}

  void init_params(ParamStore& store, RngStream& rng) const;

  /// x is rows x in_width; returns rows x out_width. Zero-row inputs pass
  /// through with zero rows.
  Tape::Id apply(Tape& tape, Tape::Id x, const ParamStore& store,
                 bool training, BnBatchStats* bn) const;

  const MlpSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }

 private:
  std::string prefix_;
  MlpSpec spec_;
};

}  // namespace mdra
