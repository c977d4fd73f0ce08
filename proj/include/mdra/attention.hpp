#pragma once

#include "mdra/tape.hpp"

namespace mdra {

/// Compatibility scores C * tanh(q . k / sqrt(d)) for every embedding row,
/// with q = context * Wq and k_n = r_n * Wk (row convention). Values lie in
/// (-C, C).
Tape::Id clipped_attention_scores(Tape& tape, Tape::Id embeddings,
                                  Tape::Id context, Tape::Id wq, Tape::Id wk,
                                  double clip_c);

/// Standard scaled-dot-product multi-head attention of a single query row
/// against N key/value rows, with output projection and residual addition.
class MhaBlock {
 public:
  MhaBlock() = default;
  MhaBlock(std::string prefix, int dim, int heads);

  void init_params(ParamStore& store, RngStream& rng) const;
  Tape::Id apply(Tape& tape, Tape::Id query, Tape::Id keys_values,
                 const ParamStore& store) const;

  int heads() const { return heads_; }

 private:
  std::string prefix_;
  int dim_ = 0;
  int heads_ = 0;
};

}  // namespace mdra
