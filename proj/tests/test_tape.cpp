#include "doctest.h"

#include <cmath>
#include <complex>
#include <cstring>

#include <Eigen/Dense>

#include "mdra/rng.hpp"
#include "mdra/tape.hpp"

using namespace mdra;

TEST_CASE("forward: identity, matmul identity, softmax symmetry") {
  Tape tape;
  Tape::Id x = tape.constant(Tensor::column({1.0, 2.0}));
  CHECK(tape.value(x).v[0] == 1.0);
  CHECK(tape.value(x).v[1] == 2.0);

  Tensor eye(2, 2);
  eye.at(0, 0) = 1;
  eye.at(1, 1) = 1;
  Tape::Id z = tape.matmul(tape.constant(eye),
                           tape.constant(Tensor::column({3.0, 4.0})));
  CHECK(tape.value(z).v[0] == 3.0);
  CHECK(tape.value(z).v[1] == 4.0);

  Tape::Id s = tape.softmax(tape.constant(Tensor::column({0.0, 0.0})));
  CHECK(tape.value(s).v[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(tape.value(s).v[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("backward: polynomial and constant") {
  ParamStore params;
  Tensor& x = params.create("x", 1, 1);
  x.v[0] = 3.0;
  Tape tape;
  Tape::Id out = tape.square(tape.param(params, "x"));
  GradStore grads;
  tape.backward(out, grads);
  CHECK(grads.at("x").v[0] == doctest::Approx(6.0).epsilon(1e-14));

  // Constant output: the parameter never enters, gradient is absent/zero.
  Tape tape2;
  Tape::Id c = tape2.constant_scalar(7.0);
  (void)tape2.param(params, "x");
  GradStore g2;
  tape2.backward(c, g2);
  CHECK(!g2.has("x"));
}

TEST_CASE("backward errors") {
  Tape tape;
  GradStore g;
  CHECK_THROWS_AS(tape.backward(0, g), ShapeError);  // empty tape
  Tape::Id v = tape.constant(Tensor::column({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(v, g), ShapeError);  // non-scalar, no seed
}

TEST_CASE("non-finite intermediate reports node id") {
  Tape tape;
  Tape::Id x = tape.constant(Tensor::column({-1.0}));
  try {
    tape.log_(x);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.node_id == 1);
  }
}

namespace {

/// Two-hidden-layer MLP with tanh activations (kink-free by construction)
/// used by several gradient-fidelity checks.
Tape::Id build_tanh_mlp(Tape& tape, ParamStore& params, const Tensor& input) {
  Tape::Id x = tape.constant(input);
  x = tape.tanh_(tape.add_rowvec(tape.matmul(x, tape.param(params, "w0")),
                                 tape.param(params, "b0")));
  x = tape.tanh_(tape.add_rowvec(tape.matmul(x, tape.param(params, "w1")),
                                 tape.param(params, "b1")));
  x = tape.add_rowvec(tape.matmul(x, tape.param(params, "w2")),
                      tape.param(params, "b2"));
  return tape.mean_all(x);
}

void init_mlp_params(ParamStore& params, int in, int h, int out,
                     RngStream& rng) {
  params.create_xavier("w0", in, h, rng);
  params.create("b0", 1, h);
  params.create_xavier("w1", h, h, rng);
  params.create("b1", 1, h);
  params.create_xavier("w2", h, out, rng);
  params.create("b2", 1, out);
}

}  // namespace

TEST_CASE("gradient fidelity: random 2-layer MLP (~200 params) vs central differences") {
  RngStream rng(7, "mlp_fd");
  ParamStore params;
  init_mlp_params(params, 6, 10, 4, rng);
  CHECK(params.trainable_size() == 224);
  Tensor input(3, 6);
  for (auto& v : input.v) v = rng.normal();
  double err = finite_diff_check(
      params, [&](Tape& t) { return build_tanh_mlp(t, params, input); }, 1e-6);
  CHECK(err < 1e-5);
}

TEST_CASE("finite_diff_check: linear map is exact") {
  RngStream rng(3, "linear_fd");
  ParamStore params;
  params.create_xavier("w", 4, 3, rng);
  Tensor input(2, 4);
  for (auto& v : input.v) v = rng.normal();
  double err = finite_diff_check(
      params,
      [&](Tape& t) {
        return t.sum_all(t.matmul(t.constant(input), t.param(params, "w")));
      },
      1e-5);
  CHECK(err < 1e-10);
}

TEST_CASE("finite_diff_check: softmax+log composite") {
  RngStream rng(11, "softmax_fd");
  ParamStore params;
  params.create_xavier("w", 5, 5, rng);
  Tensor input(5, 1);
  for (auto& v : input.v) v = rng.normal();
  double err = finite_diff_check(
      params,
      [&](Tape& t) {
        Tape::Id scores = t.matmul(t.param(params, "w"), t.constant(input));
        return t.pick(t.log_(t.softmax(scores)), 2);
      },
      1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("finite_diff_check: relu probed away from kinks") {
  for (uint64_t seed = 0; seed < 64; ++seed) {
    RngStream rng(seed, "relu_fd");
    ParamStore params;
    params.create_xavier("w", 4, 6, rng);
    Tensor input(3, 4);
    for (auto& v : input.v) v = rng.normal();
    // Probe only at points with |preactivation| > 1e-3.
    double min_pre = 1e9;
    {
      Tape t;
      Tape::Id pre = t.matmul(t.constant(input), t.param(params, "w"));
      for (double v : t.value(pre).v) min_pre = std::min(min_pre, std::abs(v));
    }
    if (min_pre <= 1e-3) continue;
    double err = finite_diff_check(
        params,
        [&](Tape& t) {
          return t.sum_all(
              t.relu(t.matmul(t.constant(input), t.param(params, "w"))));
        },
        1e-6);
    CHECK(err < 1e-6);
    return;
  }
  FAIL("no kink-free probe point found in 64 seeds");
}

TEST_CASE("finite_diff_check: step precondition") {
  ParamStore params;
  params.create("x", 1, 1).v[0] = 1.0;
  auto build = [&](Tape& t) { return t.square(t.param(params, "x")); };
  CHECK_THROWS_AS(finite_diff_check(params, build, 1e-3),
                  std::invalid_argument);
  CHECK_THROWS_AS(finite_diff_check(params, build, 1e-9),
                  std::invalid_argument);
}

TEST_CASE("gradient fidelity: random composites of the primitive set") {
  // affine, relu, tanh, softmax, batch-norm (train), mean-reduce, concat,
  // elementwise mul/add, log.
  int tested = 0;
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    RngStream rng(seed, "composite_fd");
    ParamStore params;
    params.create_xavier("w0", 4, 6, rng);
    params.create("b0", 1, 6);
    params.create_xavier("w1", 12, 5, rng);
    Tensor& gamma = params.create("g", 1, 6);
    for (auto& v : gamma.v) v = 1.0 + 0.1 * rng.normal();
    params.create("beta", 1, 6);
    Tensor rm(1, 6), rv = Tensor::ones(1, 6);
    Tensor input(4, 4);
    for (auto& v : input.v) v = rng.normal();

    // Reject probe points too close to a relu kink.
    bool near_kink = false;
    {
      Tape t;
      Tape::Id h = t.add_rowvec(
          t.matmul(t.constant(input), t.param(params, "w0")),
          t.param(params, "b0"));
      Tape::Id bn = t.batchnorm(h, t.param(params, "g"),
                                t.param(params, "beta"), &rm, &rv, true);
      for (double v : t.value(bn).v)
        if (std::abs(v) < 1e-3) near_kink = true;
    }
    if (near_kink) continue;
    tested += 1;

    auto build = [&](Tape& t) {
      Tape::Id x = t.constant(input);
      Tape::Id h = t.add_rowvec(t.matmul(x, t.param(params, "w0")),
                                t.param(params, "b0"));
      Tape::Id bn = t.batchnorm(h, t.param(params, "g"),
                                t.param(params, "beta"), &rm, &rv, true);
      Tape::Id a = t.relu(bn);
      Tape::Id b = t.tanh_(h);
      Tape::Id cat = t.concat_cols({a, b});               // 4 x 12
      Tape::Id z = t.matmul(cat, t.param(params, "w1"));  // 4 x 5
      Tape::Id zz = t.add(t.mul(z, z), z);
      Tape::Id safe = t.log_(t.scale_shift(t.square(zz), 1.0, 1.0));
      Tape::Id sm = t.softmax(t.reshape(t.col_means(safe), 5, 1));
      return t.mean_all(t.mul(sm, sm));
    };
    // Truncation- vs roundoff-dominated regimes: either step may win.
    double err = std::min(finite_diff_check(params, build, 1e-6),
                          finite_diff_check(params, build, 1e-5));
    CHECK(err < 1e-5);
  }
  CHECK(tested >= 3);
}

TEST_CASE("forward determinism: same tape built twice is bitwise identical") {
  RngStream rng(13, "det");
  ParamStore params;
  init_mlp_params(params, 5, 8, 3, rng);
  Tensor input(4, 5);
  for (auto& v : input.v) v = rng.normal();
  auto run = [&]() {
    Tape t;
    return t.value(build_tanh_mlp(t, params, input)).v[0];
  };
  double a = run(), b = run();
  CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}

TEST_CASE("masked softmax: exact zeros, unit sum, stability") {
  Tape tape;
  SUBCASE("two equal scores") {
    Tape::Id p = tape.masked_softmax(tape.constant(Tensor::column({1.0, 1.0})),
                                     {1, 1});
    CHECK(tape.value(p).v[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("single survivor") {
    Tape::Id p = tape.masked_softmax(tape.constant(Tensor::column({5.0, 2.0})),
                                     {1, 0});
    CHECK(tape.value(p).v[0] == 1.0);
    CHECK(tape.value(p).v[1] == 0.0);
  }
  SUBCASE("hand-computed softmax [0, ln2] -> [1/3, 2/3]") {
    Tape::Id p = tape.masked_softmax(
        tape.constant(Tensor::column({0.0, std::log(2.0)})), {1, 1});
    CHECK(tape.value(p).v[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(tape.value(p).v[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  }
  SUBCASE("scores spanning +-700 stay normalized") {
    Tape::Id p = tape.masked_softmax(
        tape.constant(Tensor::column({700.0, -700.0, 699.0})), {1, 1, 1});
    double sum = 0;
    for (double v : tape.value(p).v) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(tape.value(p).all_finite());
  }
  SUBCASE("all masked throws") {
    CHECK_THROWS_AS(
        tape.masked_softmax(tape.constant(Tensor::column({1.0, 2.0})), {0, 0}),
        ShapeError);
  }
  SUBCASE("masked entries get zero gradient mass") {
    ParamStore params;
    Tensor& s = params.create("s", 3, 1);
    s.v = {0.3, -0.2, 0.9};
    Tape t;
    Tape::Id p = t.masked_softmax(t.param(params, "s"), {1, 0, 1});
    GradStore g;
    t.backward(t.log_(t.pick(p, 0)), g);
    CHECK(g.at("s").v[1] == 0.0);
  }
}

TEST_CASE("max_const gates gradients by branch") {
  ParamStore params;
  Tensor& x = params.create("x", 2, 1);
  x.v = {0.5, 2.0};
  Tape t;
  Tape::Id y = t.sum_all(t.max_const(t.param(params, "x"), 1.0));
  CHECK(t.value(y).item() == doctest::Approx(3.0));
  GradStore g;
  t.backward(y, g);
  CHECK(g.at("x").v[0] == 0.0);  // below the floor: constant branch
  CHECK(g.at("x").v[1] == 1.0);
}

TEST_CASE("batchnorm: train-mode statistics and eval-mode running stats") {
  ParamStore params;
  Tensor& gamma = params.create("g", 1, 2);
  gamma.v = {2.0, 1.0};
  Tensor& beta = params.create("b", 1, 2);
  beta.v = {0.5, -1.0};
  Tensor rm(1, 2), rv(1, 2);
  rm.v = {10.0, -10.0};
  rv.v = {4.0, 9.0};
  Tensor x(4, 2);
  RngStream rng(5, "bn");
  for (auto& v : x.v) v = 3.0 + rng.normal();

  SUBCASE("train mode: normalized columns") {
    Tape t;
    Tape::Id y = t.batchnorm(t.constant(x), t.param(params, "g"),
                             t.param(params, "b"), &rm, &rv, true);
    const Tensor& out = t.value(y);
    for (int c = 0; c < 2; ++c) {
      double mean = 0;
      for (int r = 0; r < 4; ++r) mean += out.at(r, c);
      mean /= 4;
      CHECK(mean == doctest::Approx(beta.v[c]).epsilon(1e-10));
    }
  }
  SUBCASE("eval mode: running statistics") {
    Tape t;
    Tape::Id y = t.batchnorm(t.constant(x), t.param(params, "g"),
                             t.param(params, "b"), &rm, &rv, false);
    double expect =
        gamma.v[0] * (x.at(0, 0) - 10.0) / std::sqrt(4.0 + Tape::kBnEps) + 0.5;
    CHECK(t.value(y).at(0, 0) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("single row falls back to running stats in train mode") {
    Tape t;
    Tensor one_row(1, 2);
    one_row.v = {11.0, -7.0};
    Tape::Id y = t.batchnorm(t.constant(one_row), t.param(params, "g"),
                             t.param(params, "b"), &rm, &rv, true);
    double expect =
        gamma.v[0] * (11.0 - 10.0) / std::sqrt(4.0 + Tape::kBnEps) + 0.5;
    CHECK(t.value(y).at(0, 0) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("train-mode batch stats are collected") {
    Tape t;
    BnBatchStats stats;
    t.batchnorm(t.constant(x), t.param(params, "g"), t.param(params, "b"), &rm,
                &rv, true, &stats);
    REQUIRE(stats.items.size() == 1);
    CHECK(stats.items[0].key == "g");
    CHECK(stats.items[0].count == 4);
  }
}

TEST_CASE("pair_power matches a scalar complex re-computation") {
  RngStream rng(21, "pair_power");
  const int k = 3, l = 2, m = 2;
  PairPowerSpec spec;
  spec.K = k;
  spec.S = k;
  spec.L = l;
  spec.M = m;
  spec.h.resize(k * l * m);
  for (auto& h : spec.h) h = {rng.normal(), rng.normal()};
  spec.gate.assign(k * l, 1.0);
  spec.gate[1] = 0.0;  // one disabled block
  ParamStore params;
  Tensor& w = params.create("w", k * l, 2 * m);
  for (auto& v : w.v) v = rng.normal();

  Tape t;
  Tape::Id p = t.pair_power(t.param(params, "w"), spec);
  for (int rk = 0; rk < k; ++rk)
    for (int s = 0; s < k; ++s) {
      std::complex<double> z{0, 0};
      for (int bl = 0; bl < l; ++bl) {
        if (spec.gate[s * l + bl] == 0.0) continue;
        for (int im = 0; im < m; ++im) {
          std::complex<double> hv = spec.h[(rk * l + bl) * m + im];
          std::complex<double> wv(w.at(s * l + bl, im),
                                  w.at(s * l + bl, m + im));
          z += std::conj(hv) * wv;
        }
      }
      CHECK(t.value(p).at(rk, s) ==
            doctest::Approx(std::norm(z)).epsilon(1e-12));
    }

  double err = finite_diff_check(
      params,
      [&](Tape& tt) {
        return tt.sum_all(tt.pair_power(tt.param(params, "w"), spec));
      },
      1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("mu_solve_dirs: forward against dense inverse, backward against FD") {
  RngStream rng(33, "musolve");
  const int m = 3, k = 2;
  MuSolveSpec spec;
  spec.M = m;
  spec.K = k;
  spec.sigma2 = 0.7;
  spec.h.resize(k * m);
  for (auto& h : spec.h) h = {rng.normal(), rng.normal()};
  ParamStore params;
  Tensor& mu = params.create("mu", k, 1);
  mu.v = {0.8, 1.7};

  Tape t;
  Tape::Id d = t.mu_solve_dirs(t.param(params, "mu"), spec);
  // Dense-inverse reference.
  Eigen::MatrixXcd h_mat(m, k);
  for (int ik = 0; ik < k; ++ik)
    for (int im = 0; im < m; ++im) h_mat(im, ik) = spec.h[ik * m + im];
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(m, m);
  for (int ik = 0; ik < k; ++ik)
    a += (mu.v[ik] / spec.sigma2) * h_mat.col(ik) * h_mat.col(ik).adjoint();
  Eigen::MatrixXcd dirs = a.inverse() * h_mat;
  for (int ik = 0; ik < k; ++ik)
    for (int im = 0; im < m; ++im) {
      CHECK(t.value(d).at(ik, im) ==
            doctest::Approx(dirs(im, ik).real()).epsilon(1e-10));
      CHECK(t.value(d).at(ik, m + im) ==
            doctest::Approx(dirs(im, ik).imag()).epsilon(1e-10));
    }

  double err = finite_diff_check(
      params,
      [&](Tape& tt) {
        Tape::Id dd = tt.mu_solve_dirs(tt.param(params, "mu"), spec);
        return tt.sum_all(tt.mul(dd, dd));
      },
      1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("structural ops: gather/scatter/group means") {
  ParamStore params;
  Tensor& x = params.create("x", 6, 2);
  for (int i = 0; i < 12; ++i) x.v[i] = i + 1;
  Tape t;
  Tape::Id p = t.param(params, "x");
  SUBCASE("group_mean_rows") {
    Tape::Id g = t.group_mean_rows(p, 3);  // groups of 2 rows
    CHECK(t.value(g).at(0, 0) == doctest::Approx((1.0 + 3.0) / 2));
    CHECK(t.value(g).at(2, 1) == doctest::Approx((10.0 + 12.0) / 2));
  }
  SUBCASE("group_mean_strided") {
    Tape::Id g = t.group_mean_strided(p, 2);  // rows {0,2,4} and {1,3,5}
    CHECK(t.value(g).at(0, 0) == doctest::Approx((1.0 + 5.0 + 9.0) / 3));
    CHECK(t.value(g).at(1, 1) == doctest::Approx((4.0 + 8.0 + 12.0) / 3));
  }
  SUBCASE("gather then scatter restores a partition") {
    Tape::Id a = t.gather_rows(p, {0, 2, 4});
    Tape::Id b = t.gather_rows(p, {1, 3, 5});
    Tape::Id s = t.add(t.scatter_rows(a, {0, 2, 4}, 6),
                       t.scatter_rows(b, {1, 3, 5}, 6));
    for (int i = 0; i < 12; ++i) CHECK(t.value(s).v[i] == x.v[i]);
    GradStore g;
    t.backward(t.sum_all(s), g);
    for (int i = 0; i < 12; ++i) CHECK(g.at("x").v[i] == 1.0);
  }
  SUBCASE("repeat/tile adjoints sum over copies") {
    Tape::Id r = t.repeat_each_row(p, 3);
    Tape::Id q = t.tile_rows(p, 2);
    GradStore g;
    t.backward(t.add(t.sum_all(r), t.sum_all(q)), g);
    for (int i = 0; i < 12; ++i) CHECK(g.at("x").v[i] == 5.0);  // 3 + 2 copies
  }
}
