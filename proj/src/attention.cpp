#include "mdra/attention.hpp"

#include <cmath>

namespace mdra {

Tape::Id clipped_attention_scores(Tape& tape, Tape::Id embeddings,
                                  Tape::Id context, Tape::Id wq, Tape::Id wk,
                                  double clip_c) {
  int d = tape.value(embeddings).cols;
  if (tape.value(context).cols != d)
    throw ShapeError("clipped_attention_scores: dimension mismatch");
  Tape::Id q = tape.matmul(context, wq);     // 1 x d
  Tape::Id k = tape.matmul(embeddings, wk);  // N x d
  Tape::Id dots = tape.matmul(k, tape.transpose(q));  // N x 1
  Tape::Id scaled = tape.scale_shift(dots, 1.0 / std::sqrt(double(d)), 0.0);
  return tape.scale_shift(tape.tanh_(scaled), clip_c, 0.0);
}

MhaBlock::MhaBlock(std::string prefix, int dim, int heads)
    : prefix_(std::move(prefix)), dim_(dim), heads_(heads) {
  if (heads < 1 || dim % heads != 0)
    throw ShapeError("MhaBlock: width not divisible by heads");
}

void MhaBlock::init_params(ParamStore& store, RngStream& rng) const {
  store.create_xavier(prefix_ + ".wq", dim_, dim_, rng);
  store.create_xavier(prefix_ + ".wk", dim_, dim_, rng);
  store.create_xavier(prefix_ + ".wv", dim_, dim_, rng);
  store.create_xavier(prefix_ + ".wo", dim_, dim_, rng);
}

Tape::Id MhaBlock::apply(Tape& tape, Tape::Id query, Tape::Id keys_values,
                         const ParamStore& store) const {
  if (tape.value(query).cols != dim_ || tape.value(keys_values).cols != dim_)
    throw ShapeError("MhaBlock: dimension mismatch");
  int dk = dim_ / heads_;
  Tape::Id q = tape.matmul(query, tape.param(store, prefix_ + ".wq"));
  Tape::Id k = tape.matmul(keys_values, tape.param(store, prefix_ + ".wk"));
  Tape::Id v = tape.matmul(keys_values, tape.param(store, prefix_ + ".wv"));
  std::vector<Tape::Id> head_out;
  head_out.reserve(heads_);
  for (int h = 0; h < heads_; ++h) {
    Tape::Id qh = tape.slice_cols(q, h * dk, (h + 1) * dk);
    Tape::Id kh = tape.slice_cols(k, h * dk, (h + 1) * dk);
    Tape::Id vh = tape.slice_cols(v, h * dk, (h + 1) * dk);
    Tape::Id dots = tape.matmul(kh, tape.transpose(qh));  // N x 1
    Tape::Id att = tape.softmax(
        tape.scale_shift(dots, 1.0 / std::sqrt(double(dk)), 0.0));
    head_out.push_back(tape.matmul(tape.transpose(att), vh));  // 1 x dk
  }
  Tape::Id merged = tape.concat_cols(head_out);
  Tape::Id projected = tape.matmul(merged, tape.param(store, prefix_ + ".wo"));
  return tape.add(query, projected);
}

}  // namespace mdra
