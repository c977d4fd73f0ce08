#include "doctest.h"

#include <cmath>

#include "mdra/attention.hpp"
#include "mdra/engnn.hpp"
#include "mdra/mlp.hpp"
#include "mdra/rng.hpp"

using namespace mdra;

namespace {
Tensor random_tensor(int r, int c, RngStream& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (auto& v : t.v) v = scale * rng.normal();
  return t;
}
}  // namespace

TEST_CASE("mlp: layer structure, naming, zero-row pass-through") {
  RngStream rng(1, "mlp");
  ParamStore store;
  Mlp mlp("blk", MlpSpec::with_batchnorm(3, 5, 4));
  mlp.init_params(store, rng);
  CHECK(store.has("blk.0.w"));
  CHECK(store.has("blk.0.bn.g"));
  CHECK(store.has("blk.1.bn.rm"));
  CHECK(!store.has("blk.2.bn.g"));  // linear output layer
  CHECK(!store.trainable("blk.0.bn.rm"));

  Tape t;
  Tape::Id out = mlp.apply(t, t.constant(random_tensor(6, 3, rng)), store,
                           true, nullptr);
  CHECK(t.value(out).rows == 6);
  CHECK(t.value(out).cols == 4);

  Tape::Id empty = mlp.apply(t, t.constant(Tensor(0, 3)), store, true, nullptr);
  CHECK(t.value(empty).rows == 0);
  CHECK(t.value(empty).cols == 4);

  // relu_only spec ends with an activation: outputs are non-negative.
  Mlp relu_mlp("rb", MlpSpec::relu_only(3, 5, 4));
  relu_mlp.init_params(store, rng);
  Tape::Id ro = relu_mlp.apply(t, t.constant(random_tensor(6, 3, rng)), store,
                               true, nullptr);
  for (double v : t.value(ro).v) CHECK(v >= 0.0);
}

namespace {

struct EngnnFixture {
  ParamStore store;
  EngnnLayer layer;
  int nt, nr, d;

  EngnnFixture(int nt_, int nr_, int d_, uint64_t seed)
      : layer("eng", d_, d_, false), nt(nt_), nr(nr_), d(d_) {
    RngStream rng(seed, "engnn");
    layer.init_params(store, rng);
  }
};

}  // namespace

TEST_CASE("engnn: singleton graph equals the un-averaged MLP composition") {
  EngnnFixture fx(1, 1, 4, 3);
  RngStream rng(5, "engnn_in");
  Tensor tx = random_tensor(1, 4, rng), rx = random_tensor(1, 4, rng),
         e = random_tensor(1, 4, rng);
  Tape t;
  Tape::Id txn = t.constant(tx), rxn = t.constant(rx), en = t.constant(e);
  auto out = fx.layer.apply(t, txn, rxn, en, 1, 1, fx.store, false, nullptr);

  // Reference: the same MLPs with means replaced by the single message.
  Mlp m1("eng.msg_to_tx", MlpSpec::relu_only(8, 4, 4));
  Mlp m2("eng.tx_update", MlpSpec::relu_only(8, 4, 4));
  Mlp m5("eng.edge_col", MlpSpec::relu_only(8, 4, 4));
  Mlp m6("eng.edge_row", MlpSpec::relu_only(8, 4, 4));
  Mlp m7("eng.edge_update", MlpSpec::relu_only(12, 4, 4));
  Tape ref;
  Tape::Id msg = m1.apply(
      ref, ref.concat_cols({ref.constant(rx), ref.constant(e)}), fx.store,
      false, nullptr);
  Tape::Id tx_ref = m2.apply(ref, ref.concat_cols({ref.constant(tx), msg}),
                             fx.store, false, nullptr);
  for (int i = 0; i < 4; ++i)
    CHECK(t.value(out.tx).v[i] == doctest::Approx(ref.value(tx_ref).v[i])
                                      .epsilon(1e-15));
  Tape::Id col = m5.apply(
      ref, ref.concat_cols({ref.constant(e), ref.constant(rx)}), fx.store,
      false, nullptr);
  Tape::Id row = m6.apply(
      ref, ref.concat_cols({ref.constant(e), ref.constant(tx)}), fx.store,
      false, nullptr);
  Tape::Id e_ref = m7.apply(ref, ref.concat_cols({ref.constant(e), col, row}),
                            fx.store, false, nullptr);
  for (int i = 0; i < 4; ++i)
    CHECK(t.value(out.edge).v[i] == doctest::Approx(ref.value(e_ref).v[i])
                                        .epsilon(1e-15));
}

TEST_CASE("engnn: permutation equivariance") {
  const int nt = 3, nr = 4, d = 5;
  EngnnFixture fx(nt, nr, d, 11);
  RngStream rng(13, "engnn_perm");
  Tensor tx = random_tensor(nt, d, rng), rx = random_tensor(nr, d, rng),
         e = random_tensor(nt * nr, d, rng);
  std::vector<int> pt = {2, 0, 1};  // tx' row i = tx row pt[i]
  std::vector<int> pr = {1, 3, 0, 2};

  Tape t1;
  auto out1 = fx.layer.apply(t1, t1.constant(tx), t1.constant(rx),
                             t1.constant(e), nt, nr, fx.store, false, nullptr);
  Tensor txp(nt, d), rxp(nr, d), ep(nt * nr, d);
  for (int i = 0; i < nt; ++i)
    for (int c = 0; c < d; ++c) txp.at(i, c) = tx.at(pt[i], c);
  for (int j = 0; j < nr; ++j)
    for (int c = 0; c < d; ++c) rxp.at(j, c) = rx.at(pr[j], c);
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < nr; ++j)
      for (int c = 0; c < d; ++c)
        ep.at(i * nr + j, c) = e.at(pt[i] * nr + pr[j], c);
  Tape t2;
  auto out2 = fx.layer.apply(t2, t2.constant(txp), t2.constant(rxp),
                             t2.constant(ep), nt, nr, fx.store, false, nullptr);
  for (int i = 0; i < nt; ++i)
    for (int c = 0; c < d; ++c)
      CHECK(t2.value(out2.tx).at(i, c) ==
            doctest::Approx(t1.value(out1.tx).at(pt[i], c)).epsilon(1e-13));
  for (int j = 0; j < nr; ++j)
    for (int c = 0; c < d; ++c)
      CHECK(t2.value(out2.rx).at(j, c) ==
            doctest::Approx(t1.value(out1.rx).at(pr[j], c)).epsilon(1e-13));
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < nr; ++j)
      for (int c = 0; c < d; ++c)
        CHECK(t2.value(out2.edge).at(i * nr + j, c) ==
              doctest::Approx(t1.value(out1.edge).at(pt[i] * nr + pr[j], c))
                  .epsilon(1e-13));
}

TEST_CASE("engnn: duplicate nodes with duplicate edges get identical updates") {
  const int nt = 3, nr = 2, d = 4;
  EngnnFixture fx(nt, nr, d, 17);
  RngStream rng(19, "engnn_dup");
  Tensor tx = random_tensor(nt, d, rng), rx = random_tensor(nr, d, rng),
         e = random_tensor(nt * nr, d, rng);
  // Make TX nodes 0 and 2 identical, including their incident edge rows.
  for (int c = 0; c < d; ++c) tx.at(2, c) = tx.at(0, c);
  for (int j = 0; j < nr; ++j)
    for (int c = 0; c < d; ++c) e.at(2 * nr + j, c) = e.at(0 * nr + j, c);
  Tape t;
  auto out = fx.layer.apply(t, t.constant(tx), t.constant(rx), t.constant(e),
                            nt, nr, fx.store, false, nullptr);
  for (int c = 0; c < d; ++c) {
    CHECK(std::abs(t.value(out.tx).at(0, c) - t.value(out.tx).at(2, c)) <
          1e-12);
    for (int j = 0; j < nr; ++j)
      CHECK(std::abs(t.value(out.edge).at(0 * nr + j, c) -
                     t.value(out.edge).at(2 * nr + j, c)) < 1e-12);
  }
}

TEST_CASE("engnn: finite outputs for large-magnitude inputs") {
  EngnnFixture fx(2, 3, 4, 23);
  RngStream rng(29, "engnn_big");
  Tape t;
  auto out = fx.layer.apply(t, t.constant(random_tensor(2, 4, rng, 1e3)),
                            t.constant(random_tensor(3, 4, rng, 1e3)),
                            t.constant(random_tensor(6, 4, rng, 1e3)), 2, 3,
                            fx.store, false, nullptr);
  CHECK(t.value(out.tx).all_finite());
  CHECK(t.value(out.rx).all_finite());
  CHECK(t.value(out.edge).all_finite());
}

TEST_CASE("clipped attention scores") {
  const int d = 8, n = 5;
  const double clip_c = 8.0;
  RngStream rng(31, "att");
  ParamStore store;
  store.create_xavier("wq", d, d, rng);
  store.create_xavier("wk", d, d, rng);

  SUBCASE("zero dot product gives zero score") {
    Tape t;
    Tape::Id emb = t.constant(Tensor::zeros(n, d));
    Tape::Id ctx = t.constant(random_tensor(1, d, rng));
    Tape::Id s = clipped_attention_scores(t, emb, ctx, t.param(store, "wq"),
                                          t.param(store, "wk"), clip_c);
    for (double v : t.value(s).v) CHECK(v == 0.0);
  }
  SUBCASE("scores are bounded by C and saturate toward it") {
    Tape t;
    Tape::Id emb = t.constant(random_tensor(n, d, rng, 100.0));
    Tape::Id ctx = t.constant(random_tensor(1, d, rng, 100.0));
    Tape::Id s = clipped_attention_scores(t, emb, ctx, t.param(store, "wq"),
                                          t.param(store, "wk"), clip_c);
    for (double v : t.value(s).v) {
      CHECK(std::abs(v) <= clip_c);
      CHECK(std::abs(std::abs(v) - clip_c) < 1e-6);  // deep in the tanh tail
    }
  }
  SUBCASE("matches scalar recomputation to 1e-12") {
    Tensor emb = random_tensor(n, d, rng), ctx = random_tensor(1, d, rng);
    Tape t;
    Tape::Id s = clipped_attention_scores(t, t.constant(emb), t.constant(ctx),
                                          t.param(store, "wq"),
                                          t.param(store, "wk"), clip_c);
    const Tensor& wq = store.at("wq");
    const Tensor& wk = store.at("wk");
    for (int i = 0; i < n; ++i) {
      double dot = 0;
      for (int a = 0; a < d; ++a) {
        double qa = 0, ka = 0;
        for (int b = 0; b < d; ++b) {
          qa += ctx.at(0, b) * wq.at(b, a);
          ka += emb.at(i, b) * wk.at(b, a);
        }
        dot += qa * ka;
      }
      double expect = clip_c * std::tanh(dot / std::sqrt(double(d)));
      CHECK(t.value(s).v[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("mha block") {
  const int d = 8, heads = 2;
  RngStream rng(37, "mha");
  ParamStore store;
  MhaBlock mha("mha", d, heads);
  mha.init_params(store, rng);

  SUBCASE("width not divisible by heads throws") {
    CHECK_THROWS_AS(MhaBlock("bad", 6, 4), ShapeError);
  }
  SUBCASE("single key/value receives weight one") {
    Tensor q = random_tensor(1, d, rng), kv = random_tensor(1, d, rng);
    Tape t;
    Tape::Id out = mha.apply(t, t.constant(q), t.constant(kv), store);
    // Expected: q + (kv * Wv) * Wo.
    Tape ref;
    Tape::Id v = ref.matmul(ref.constant(kv), ref.param(store, "mha.wv"));
    Tape::Id expect = ref.add(ref.constant(q),
                              ref.matmul(v, ref.param(store, "mha.wo")));
    for (int c = 0; c < d; ++c)
      CHECK(t.value(out).v[c] ==
            doctest::Approx(ref.value(expect).v[c]).epsilon(1e-13));
  }
  SUBCASE("identical keys: output is residual plus projected value mean") {
    Tensor q = random_tensor(1, d, rng);
    Tensor row = random_tensor(1, d, rng);
    Tensor kv(3, d);
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < d; ++c) kv.at(i, c) = row.at(0, c);
    Tape t;
    Tape::Id out = mha.apply(t, t.constant(q), t.constant(kv), store);
    Tape ref;
    Tape::Id v = ref.matmul(ref.constant(row), ref.param(store, "mha.wv"));
    Tape::Id expect = ref.add(ref.constant(q),
                              ref.matmul(v, ref.param(store, "mha.wo")));
    for (int c = 0; c < d; ++c)
      CHECK(t.value(out).v[c] ==
            doctest::Approx(ref.value(expect).v[c]).epsilon(1e-12));
  }
  SUBCASE("random case matches a per-head scalar recomputation to 1e-10") {
    const int n = 4;
    Tensor q = random_tensor(1, d, rng), kv = random_tensor(n, d, rng);
    Tape t;
    Tape::Id out = mha.apply(t, t.constant(q), t.constant(kv), store);

    const Tensor& wq = store.at("mha.wq");
    const Tensor& wk = store.at("mha.wk");
    const Tensor& wv = store.at("mha.wv");
    const Tensor& wo = store.at("mha.wo");
    const int dk = d / heads;
    auto proj = [&](const Tensor& x, const Tensor& w, int row, int col) {
      double s = 0;
      for (int b = 0; b < d; ++b) s += x.at(row, b) * w.at(b, col);
      return s;
    };
    std::vector<double> merged(d, 0.0);
    for (int h = 0; h < heads; ++h) {
      std::vector<double> scores(n);
      double mx = -1e300;
      for (int i = 0; i < n; ++i) {
        double dot = 0;
        for (int a = 0; a < dk; ++a)
          dot += proj(q, wq, 0, h * dk + a) * proj(kv, wk, i, h * dk + a);
        scores[i] = dot / std::sqrt(double(dk));
        mx = std::max(mx, scores[i]);
      }
      double z = 0;
      for (int i = 0; i < n; ++i) z += std::exp(scores[i] - mx);
      for (int a = 0; a < dk; ++a) {
        double acc = 0;
        for (int i = 0; i < n; ++i)
          acc += std::exp(scores[i] - mx) / z * proj(kv, wv, i, h * dk + a);
        merged[h * dk + a] = acc;
      }
    }
    for (int c = 0; c < d; ++c) {
      double expect = q.at(0, c);
      for (int b = 0; b < d; ++b) expect += merged[b] * wo.at(b, c);
      CHECK(t.value(out).v[c] == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}
