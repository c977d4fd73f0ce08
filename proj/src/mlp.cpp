#include "mdra/mlp.hpp"

namespace mdra {

void Mlp::init_params(ParamStore& store, RngStream& rng) const {
  int in = spec_.in_width;
  for (size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& layer = spec_.layers[i];
    std::string base = prefix_ + "." + std::to_string(i);
    store.create_xavier(base + ".w", in, layer.width, rng);
    store.create(base + ".b", 1, layer.width);
    if (layer.batch_norm) {
      Tensor& g = store.create(base + ".bn.g", 1, layer.width);
      for (auto& x : g.v) x = 1.0;
      store.create(base + ".bn.b", 1, layer.width);
      store.create(base + ".bn.rm", 1, layer.width, /*trainable=*/false);
      Tensor& rv = store.create(base + ".bn.rv", 1, layer.width,
                                /*trainable=*/false);
      for (auto& x : rv.v) x = 1.0;
    }
    in = layer.width;
  }
}

Tape::Id Mlp::apply(Tape& tape, Tape::Id x, const ParamStore& store,
                    bool training, BnBatchStats* bn) const {
  for (size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& layer = spec_.layers[i];
    std::string base = prefix_ + "." + std::to_string(i);
    x = tape.matmul(x, tape.param(store, base + ".w"));
    x = tape.add_rowvec(x, tape.param(store, base + ".b"));
    if (layer.batch_norm) {
      Tape::Id gamma = tape.param(store, base + ".bn.g");
      Tape::Id beta = tape.param(store, base + ".bn.b");
      x = tape.batchnorm(x, gamma, beta, &store.at(base + ".bn.rm"),
                         &store.at(base + ".bn.rv"), training, bn);
    }
    if (layer.relu) x = tape.relu(x);
  }
  return x;
}

}  // namespace mdra
