#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mdra/param_store.hpp"
#include "mdra/tensor.hpp"

namespace mdra {

/// Per-application batch statistics emitted by batch-norm nodes in training
/// mode, pooled by the trainer into the running statistics.
struct BnBatchStats {
  struct Item {
    std::string key;  // name of the layer's gamma parameter
    Tensor mean;      // 1 x c
    Tensor var;       // 1 x c, biased
    int count = 0;    // rows in this application
  };
  std::vector<Item> items;
};

/// Constant payload of the pair-power node: P(k,s) = |sum_l gate[s,l] *
/// h_{k,l}^H w_{s,l}|^2 for receiver k and transmit stream s. The cell-free
/// rate uses L channel blocks (one per AP); the movable-antenna rate is the
/// L = 1 special case.
struct PairPowerSpec {
  int K = 0;  // receivers
  int S = 0;  // transmit streams
  int L = 1;  // channel blocks per stream
  int M = 0;  // antennas per block
  std::vector<std::complex<double>> h;  // h[(k*L + l)*M + m]
  std::vector<double> gate;             // gate[s*L + l]
};

/// Constant payload of the regularized-channel solve: given mu >= 0, returns
/// the unnormalized directions d_k = (I + sum_i mu_i/sigma2 h_i h_i^H)^{-1}
/// h_k, differentiated through the solve's implicit adjoint.
struct MuSolveSpec {
  int M = 0, K = 0;
  std::vector<std::complex<double>> h;  // h[k*M + m]
  double sigma2 = 1.0;
};

/// Reverse-mode tape over rank-<=2 real tensors. Nodes are evaluated eagerly
/// as they are created (the forward pass), values are cached per node, and
/// backward() replays local adjoint rules in reverse topological order.
/// Every forward output is checked for finiteness; the offending node id is
/// reported otherwise. A tape is single-writer; backward may be called any
/// number of times with different outputs or seeds.
class Tape {
 public:
  using Id = int;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Id constant(Tensor value);
  Id constant_scalar(double x) { return constant(Tensor::scalar(x)); }
  Id param(const ParamStore& store, const std::string& name);

  // Linear algebra.
  Id matmul(Id a, Id b);
  Id transpose(Id a);

  // Elementwise binary (same shape).
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id div(Id a, Id b);

  // Broadcasts.
  Id add_rowvec(Id x, Id bias);  // bias is 1 x c
  Id mul_colvec(Id x, Id v);     // v is r x 1

  // Elementwise unary.
  Id relu(Id x);
  Id tanh_(Id x);
  Id log_(Id x);
  Id exp_(Id x);
  Id sqrt_(Id x);
  Id square(Id x);
  Id scale_shift(Id x, double a, double b);  // a*x + b
  Id max_const(Id x, double c);

  // Reductions.
  Id sum_all(Id x);
  Id mean_all(Id x);
  Id row_sums(Id x);   // r x c -> r x 1
  Id col_means(Id x);  // r x c -> 1 x c

  // Structure.
  Id concat_cols(const std::vector<Id>& xs);
  Id concat_rows(const std::vector<Id>& xs);
  Id slice_rows(Id x, int r0, int r1);
  Id slice_cols(Id x, int c0, int c1);
  Id reshape(Id x, int rows, int cols);
  Id repeat_rows(Id x, int n);          // 1 x c -> n x c
  Id repeat_each_row(Id x, int times);  // row i -> rows i*times .. i*times+times-1
  Id tile_rows(Id x, int times);        // whole block stacked `times` times
  Id group_mean_rows(Id x, int groups);     // consecutive groups
  Id group_mean_strided(Id x, int groups);  // row r belongs to group r % groups
  Id gather_rows(Id x, std::vector<int> idx);
  Id scatter_rows(Id x, const std::vector<int>& idx, int total_rows);

  // Vector ops (n x 1 inputs).
  Id softmax(Id x);
  Id masked_softmax(Id x, const std::vector<uint8_t>& keep);
  Id pick(Id x, int index);

  /// Per-feature batch normalization over the rows of x. Training mode uses
  /// this application's batch statistics when it has >= 2 rows (recorded into
  /// `collect` when given) and the running statistics otherwise; eval mode
  /// always uses the running statistics.
  Id batchnorm(Id x, Id gamma, Id beta, const Tensor* run_mean,
               const Tensor* run_var, bool training,
               BnBatchStats* collect = nullptr);

  // Domain-specific nodes with hand-written adjoints.
  Id pair_power(Id w, PairPowerSpec spec);
  Id mu_solve_dirs(Id mu, MuSolveSpec spec);

  const Tensor& value(Id id) const;
  int size() const;

  /// Accumulates d(output)/d(param) into `grads` for every trainable
  /// parameter reachable from `output`. With a null seed the output must be
  /// scalar and is seeded with `seed_scalar`.
  void backward(Id output, GradStore& grads, double seed_scalar = 1.0,
                const Tensor* seed = nullptr) const;

  static constexpr double kBnEps = 1e-5;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Central-difference gradient audit: rebuilds the tape via `build` (which
/// must return a scalar output node) at perturbed parameter values and
/// compares against backward(). Returns the elementwise max relative error
/// with denominator max(|g_fd|, 1e-8). `step` must lie in [1e-8, 1e-4].
double finite_diff_check(ParamStore& params,
                         const std::function<Tape::Id(Tape&)>& build,
                         double step);

/// Gradient audit for full-pipeline objectives, where coordinates span many
/// orders of magnitude: coordinate i passes when |g_ad - g_fd| <=
/// rtol * max(|g_ad|, |g_fd|) + atol, with atol set to the central
/// difference's own resolution (a few hundred ulps of f over 2*step).
/// Returns the worst ratio |g_ad - g_fd| / (rtol * max + atol); <= 1 passes.
double gradient_check_ratio(ParamStore& params,
                            const std::function<Tape::Id(Tape&)>& build,
                            double step, double rtol);

}  // namespace mdra
