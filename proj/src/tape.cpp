#include "mdra/tape.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace mdra {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

MapC emap(const Tensor& t) { return MapC(t.v.data(), t.rows, t.cols); }
MapM emap(Tensor& t) { return MapM(t.v.data(), t.rows, t.cols); }

enum class Op : uint8_t {
  Const, Param,
  MatMul, Transpose,
  Add, Sub, Mul, Div,
  AddRowVec, MulColVec,
  Relu, Tanh, Log, Exp, Sqrt, Square, ScaleShift, MaxConst,
  SumAll, MeanAll, RowSums, ColMeans,
  ConcatCols, ConcatRows, SliceRows, SliceCols, Reshape,
  RepeatRows, RepeatEachRow, TileRows,
  GroupMeanRows, GroupMeanStrided, GatherRows, ScatterRows,
  MaskedSoftmax, Pick, BatchNorm,
  PairPower, MuSolveDirs,
};

struct BnCache {
  Tensor mean, inv_std, xhat;
  bool used_batch_stats = false;
};

struct PairPowerCache {
  PairPowerSpec spec;
  std::vector<std::complex<double>> z;  // K x S
};

struct MuSolveCache {
  MuSolveSpec spec;
  Eigen::LLT<Eigen::MatrixXcd> llt;
  Eigen::MatrixXcd dirs;  // M x K
};

struct Node {
  Op op;
  std::vector<int> in;
  Tensor val;
  bool needs_grad = false;
  double a = 0.0, b = 0.0;
  int i0 = 0, i1 = 0;
  std::vector<int> idx;
  std::vector<uint8_t> keep;
  const Tensor* bound = nullptr;  // Param value / BN running stats live here
  const Tensor* bound2 = nullptr;
  std::string pname;
  std::unique_ptr<BnCache> bn;
  std::unique_ptr<PairPowerCache> pp;
  std::unique_ptr<MuSolveCache> ms;
};

}  // namespace

struct Tape::Impl {
  std::vector<Node> nodes;

  const Tensor& val(int id) const { return nodes[id].val; }

  int push(Node n) {
    int id = static_cast<int>(nodes.size());
    if (!n.val.all_finite())
      throw NonFiniteError(id, "non-finite value at tape node " +
                                   std::to_string(id));
    nodes.push_back(std::move(n));
    return id;
  }

  bool any_grad(const std::vector<int>& in) const {
    for (int i : in)
      if (nodes[i].needs_grad) return true;
    return false;
  }

  void check(bool cond, const char* msg) const {
    if (!cond) throw ShapeError(msg);
  }
};

Tape::Tape() : impl_(std::make_unique<Impl>()) { impl_->nodes.reserve(256); }
Tape::~Tape() = default;

const Tensor& Tape::value(Id id) const { return impl_->nodes.at(id).val; }
int Tape::size() const { return static_cast<int>(impl_->nodes.size()); }

Tape::Id Tape::constant(Tensor value) {
  Node n;
  n.op = Op::Const;
  n.val = std::move(value);
  n.needs_grad = false;
  return impl_->push(std::move(n));
}

Tape::Id Tape::param(const ParamStore& store, const std::string& name) {
  Node n;
  n.op = Op::Param;
  n.bound = &store.at(name);
  n.pname = name;
  n.val = *n.bound;
  n.needs_grad = store.trainable(name);
  return impl_->push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  impl_->check(A.cols == B.rows, "matmul: inner dimensions differ");
  Node n;
  n.op = Op::MatMul;
  n.in = {a, b};
  n.val = Tensor(A.rows, B.cols);
  emap(n.val) = emap(A) * emap(B);
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::transpose(Id a) {
  const Tensor& A = value(a);
  Node n;
  n.op = Op::Transpose;
  n.in = {a};
  n.val = Tensor(A.cols, A.rows);
  emap(n.val) = emap(A).transpose();
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

namespace {
Node binary_node(Op op, Tape::Id a, Tape::Id b, const Tensor& A,
                 const Tensor& B) {
  if (!A.same_shape(B)) throw ShapeError("elementwise op: shape mismatch");
  Node n;
  n.op = op;
  n.in = {a, b};
  n.val = Tensor(A.rows, A.cols);
  return n;
}
}  // namespace

Tape::Id Tape::add(Id a, Id b) {
  Node n = binary_node(Op::Add, a, b, value(a), value(b));
  for (size_t i = 0; i < n.val.v.size(); ++i)
    n.val.v[i] = value(a).v[i] + value(b).v[i];
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  Node n = binary_node(Op::Sub, a, b, value(a), value(b));
  for (size_t i = 0; i < n.val.v.size(); ++i)
    n.val.v[i] = value(a).v[i] - value(b).v[i];
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  Node n = binary_node(Op::Mul, a, b, value(a), value(b));
  for (size_t i = 0; i < n.val.v.size(); ++i)
    n.val.v[i] = value(a).v[i] * value(b).v[i];
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::div(Id a, Id b) {
  Node n = binary_node(Op::Div, a, b, value(a), value(b));
  for (size_t i = 0; i < n.val.v.size(); ++i)
    n.val.v[i] = value(a).v[i] / value(b).v[i];
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::add_rowvec(Id x, Id bias) {
  const Tensor& X = value(x);
  const Tensor& B = value(bias);
  impl_->check(B.rows == 1 && B.cols == X.cols, "add_rowvec: bias must be 1 x cols");
  Node n;
  n.op = Op::AddRowVec;
  n.in = {x, bias};
  n.val = Tensor(X.rows, X.cols);
  for (int r = 0; r < X.rows; ++r)
    for (int c = 0; c < X.cols; ++c) n.val.at(r, c) = X.at(r, c) + B.v[c];
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::mul_colvec(Id x, Id v) {
  const Tensor& X = value(x);
  const Tensor& V = value(v);
  impl_->check(V.cols == 1 && V.rows == X.rows, "mul_colvec: v must be rows x 1");
  Node n;
  n.op = Op::MulColVec;
  n.in = {x, v};
  n.val = Tensor(X.rows, X.cols);
  for (int r = 0; r < X.rows; ++r)
    for (int c = 0; c < X.cols; ++c) n.val.at(r, c) = X.at(r, c) * V.v[r];
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

namespace {
template <typename F>
Node unary_node(Op op, Tape::Id x, const Tensor& X, F f) {
  Node n;
  n.op = op;
  n.in = {x};
  n.val = Tensor(X.rows, X.cols);
  for (size_t i = 0; i < X.v.size(); ++i) n.val.v[i] = f(X.v[i]);
  return n;
}
}  // namespace

Tape::Id Tape::relu(Id x) {
  Node n = unary_node(Op::Relu, x, value(x),
                      [](double a) { return a > 0 ? a : 0.0; });
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}
Tape::Id Tape::tanh_(Id x) {
  Node n = unary_node(Op::Tanh, x, value(x), [](double a) { return std::tanh(a); });
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}
Tape::Id Tape::log_(Id x) {
  Node n = unary_node(Op::Log, x, value(x), [](double a) { return std::log(a); });
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}
Tape::Id Tape::exp_(Id x) {
  Node n = unary_node(Op::Exp, x, value(x), [](double a) { return std::exp(a); });
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}
Tape::Id Tape::sqrt_(Id x) {
  Node n = unary_node(Op::Sqrt, x, value(x), [](double a) { return std::sqrt(a); });
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}
Tape::Id Tape::square(Id x) {
  Node n = unary_node(Op::Square, x, value(x), [](double a) { return a * a; });
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}
Tape::Id Tape::scale_shift(Id x, double a, double b) {
  Node n = unary_node(Op::ScaleShift, x, value(x),
                      [a, b](double t) { return a * t + b; });
  n.a = a;
  n.b = b;
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}
Tape::Id Tape::max_const(Id x, double c) {
  Node n = unary_node(Op::MaxConst, x, value(x),
                      [c](double t) { return t > c ? t : c; });
  n.a = c;
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::sum_all(Id x) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::SumAll;
  n.in = {x};
  double s = 0;
  for (double a : X.v) s += a;
  n.val = Tensor::scalar(s);
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::mean_all(Id x) {
  const Tensor& X = value(x);
  impl_->check(!X.v.empty(), "mean_all: empty tensor");
  Node n;
  n.op = Op::MeanAll;
  n.in = {x};
  double s = 0;
  for (double a : X.v) s += a;
  n.val = Tensor::scalar(s / static_cast<double>(X.v.size()));
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::row_sums(Id x) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::RowSums;
  n.in = {x};
  n.val = Tensor(X.rows, 1);
  for (int r = 0; r < X.rows; ++r) {
    double s = 0;
    for (int c = 0; c < X.cols; ++c) s += X.at(r, c);
    n.val.v[r] = s;
  }
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::col_means(Id x) {
  const Tensor& X = value(x);
  impl_->check(X.rows > 0, "col_means: empty tensor");
  Node n;
  n.op = Op::ColMeans;
  n.in = {x};
  n.val = Tensor(1, X.cols);
  for (int c = 0; c < X.cols; ++c) {
    double s = 0;
    for (int r = 0; r < X.rows; ++r) s += X.at(r, c);
    n.val.v[c] = s / X.rows;
  }
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::concat_cols(const std::vector<Id>& xs) {
  impl_->check(!xs.empty(), "concat_cols: empty input list");
  int rows = value(xs[0]).rows;
  int cols = 0;
  for (Id id : xs) {
    impl_->check(value(id).rows == rows, "concat_cols: row mismatch");
    cols += value(id).cols;
  }
  Node n;
  n.op = Op::ConcatCols;
  n.in = xs;
  n.val = Tensor(rows, cols);
  int off = 0;
  for (Id id : xs) {
    const Tensor& X = value(id);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < X.cols; ++c) n.val.at(r, off + c) = X.at(r, c);
    off += X.cols;
  }
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::concat_rows(const std::vector<Id>& xs) {
  impl_->check(!xs.empty(), "concat_rows: empty input list");
  int cols = value(xs[0]).cols;
  int rows = 0;
  for (Id id : xs) {
    impl_->check(value(id).cols == cols, "concat_rows: col mismatch");
    rows += value(id).rows;
  }
  Node n;
  n.op = Op::ConcatRows;
  n.in = xs;
  n.val = Tensor(rows, cols);
  int off = 0;
  for (Id id : xs) {
    const Tensor& X = value(id);
    std::copy(X.v.begin(), X.v.end(), n.val.v.begin() + static_cast<size_t>(off) * cols);
    off += X.rows;
  }
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::slice_rows(Id x, int r0, int r1) {
  const Tensor& X = value(x);
  impl_->check(0 <= r0 && r0 <= r1 && r1 <= X.rows, "slice_rows: bad range");
  Node n;
  n.op = Op::SliceRows;
  n.in = {x};
  n.i0 = r0;
  n.i1 = r1;
  n.val = Tensor(r1 - r0, X.cols);
  std::copy(X.v.begin() + static_cast<size_t>(r0) * X.cols,
            X.v.begin() + static_cast<size_t>(r1) * X.cols, n.val.v.begin());
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::slice_cols(Id x, int c0, int c1) {
  const Tensor& X = value(x);
  impl_->check(0 <= c0 && c0 <= c1 && c1 <= X.cols, "slice_cols: bad range");
  Node n;
  n.op = Op::SliceCols;
  n.in = {x};
  n.i0 = c0;
  n.i1 = c1;
  n.val = Tensor(X.rows, c1 - c0);
  for (int r = 0; r < X.rows; ++r)
    for (int c = c0; c < c1; ++c) n.val.at(r, c - c0) = X.at(r, c);
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::reshape(Id x, int rows, int cols) {
  const Tensor& X = value(x);
  impl_->check(static_cast<size_t>(rows) * cols == X.v.size(),
               "reshape: size mismatch");
  Node n;
  n.op = Op::Reshape;
  n.in = {x};
  n.val = Tensor(rows, cols, X.v);
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::repeat_rows(Id x, int nrep) {
  const Tensor& X = value(x);
  impl_->check(X.rows == 1, "repeat_rows: input must be 1 x c");
  Node n;
  n.op = Op::RepeatRows;
  n.in = {x};
  n.i0 = nrep;
  n.val = Tensor(nrep, X.cols);
  for (int r = 0; r < nrep; ++r)
    for (int c = 0; c < X.cols; ++c) n.val.at(r, c) = X.v[c];
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::repeat_each_row(Id x, int times) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::RepeatEachRow;
  n.in = {x};
  n.i0 = times;
  n.val = Tensor(X.rows * times, X.cols);
  for (int r = 0; r < X.rows; ++r)
    for (int t = 0; t < times; ++t)
      for (int c = 0; c < X.cols; ++c)
        n.val.at(r * times + t, c) = X.at(r, c);
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::tile_rows(Id x, int times) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::TileRows;
  n.in = {x};
  n.i0 = times;
  n.val = Tensor(X.rows * times, X.cols);
  for (int t = 0; t < times; ++t)
    std::copy(X.v.begin(), X.v.end(),
              n.val.v.begin() + static_cast<size_t>(t) * X.v.size());
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::group_mean_rows(Id x, int groups) {
  const Tensor& X = value(x);
  impl_->check(groups > 0 && X.rows % groups == 0,
               "group_mean_rows: rows not divisible by groups");
  int gsz = X.rows / groups;
  Node n;
  n.op = Op::GroupMeanRows;
  n.in = {x};
  n.i0 = groups;
  n.val = Tensor(groups, X.cols);
  for (int g = 0; g < groups; ++g)
    for (int c = 0; c < X.cols; ++c) {
      double s = 0;
      for (int r = 0; r < gsz; ++r) s += X.at(g * gsz + r, c);
      n.val.at(g, c) = s / gsz;
    }
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::group_mean_strided(Id x, int groups) {
  const Tensor& X = value(x);
  impl_->check(groups > 0 && X.rows % groups == 0,
               "group_mean_strided: rows not divisible by groups");
  int cnt = X.rows / groups;
  Node n;
  n.op = Op::GroupMeanStrided;
  n.in = {x};
  n.i0 = groups;
  n.val = Tensor(groups, X.cols);
  for (int g = 0; g < groups; ++g)
    for (int c = 0; c < X.cols; ++c) {
      double s = 0;
      for (int r = 0; r < cnt; ++r) s += X.at(r * groups + g, c);
      n.val.at(g, c) = s / cnt;
    }
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::gather_rows(Id x, std::vector<int> idx) {
  const Tensor& X = value(x);
  for (int i : idx)
    impl_->check(0 <= i && i < X.rows, "gather_rows: index out of range");
  Node n;
  n.op = Op::GatherRows;
  n.in = {x};
  n.idx = std::move(idx);
  n.val = Tensor(static_cast<int>(n.idx.size()), X.cols);
  for (size_t r = 0; r < n.idx.size(); ++r)
    for (int c = 0; c < X.cols; ++c)
      n.val.at(static_cast<int>(r), c) = X.at(n.idx[r], c);
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::scatter_rows(Id x, const std::vector<int>& idx, int total_rows) {
  const Tensor& X = value(x);
  impl_->check(static_cast<int>(idx.size()) == X.rows,
               "scatter_rows: index count must match rows");
  for (int i : idx)
    impl_->check(0 <= i && i < total_rows, "scatter_rows: index out of range");
  Node n;
  n.op = Op::ScatterRows;
  n.in = {x};
  n.idx = idx;
  n.i0 = total_rows;
  n.val = Tensor(total_rows, X.cols);
  for (int r = 0; r < X.rows; ++r)
    for (int c = 0; c < X.cols; ++c) n.val.at(idx[r], c) += X.at(r, c);
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::softmax(Id x) {
  return masked_softmax(x, std::vector<uint8_t>(value(x).v.size(), 1));
}

Tape::Id Tape::masked_softmax(Id x, const std::vector<uint8_t>& keep) {
  const Tensor& X = value(x);
  impl_->check(X.cols == 1, "masked_softmax: input must be n x 1");
  impl_->check(keep.size() == X.v.size(), "masked_softmax: mask size mismatch");
  bool any = false;
  for (uint8_t k : keep) any |= (k != 0);
  if (!any) throw ShapeError("masked_softmax: all indices masked");
  Node n;
  n.op = Op::MaskedSoftmax;
  n.in = {x};
  n.keep = keep;
  n.val = Tensor(X.rows, 1);
  // Max-subtraction over the kept entries only; masked entries are excluded
  // from the normalization so their probability is exactly zero.
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) mx = std::max(mx, X.v[i]);
  double z = 0;
  for (size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) z += std::exp(X.v[i] - mx);
  for (size_t i = 0; i < keep.size(); ++i)
    n.val.v[i] = keep[i] ? std::exp(X.v[i] - mx) / z : 0.0;
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::pick(Id x, int index) {
  const Tensor& X = value(x);
  impl_->check(X.cols == 1 && index >= 0 && index < X.rows,
               "pick: index out of range");
  Node n;
  n.op = Op::Pick;
  n.in = {x};
  n.i0 = index;
  n.val = Tensor::scalar(X.v[index]);
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::batchnorm(Id x, Id gamma, Id beta, const Tensor* run_mean,
                         const Tensor* run_var, bool training,
                         BnBatchStats* collect) {
  const Tensor& X = value(x);
  const Tensor& G = value(gamma);
  const Tensor& B = value(beta);
  impl_->check(G.rows == 1 && G.cols == X.cols && B.rows == 1 && B.cols == X.cols,
               "batchnorm: gamma/beta must be 1 x cols");
  impl_->check(run_mean != nullptr && run_var != nullptr &&
                   run_mean->cols == X.cols && run_var->cols == X.cols,
               "batchnorm: running stats missing or mis-sized");
  Node n;
  n.op = Op::BatchNorm;
  n.in = {x, gamma, beta};
  n.bound = run_mean;
  n.bound2 = run_var;
  n.bn = std::make_unique<BnCache>();
  n.val = Tensor(X.rows, X.cols);
  const int r = X.rows, c = X.cols;
  bool batch_stats = training && r >= 2;
  n.bn->used_batch_stats = batch_stats;
  n.bn->mean = Tensor(1, c);
  n.bn->inv_std = Tensor(1, c);
  if (batch_stats) {
    Tensor var(1, c);
    for (int j = 0; j < c; ++j) {
      double m = 0;
      for (int i = 0; i < r; ++i) m += X.at(i, j);
      m /= r;
      double v = 0;
      for (int i = 0; i < r; ++i) {
        double d = X.at(i, j) - m;
        v += d * d;
      }
      v /= r;
      n.bn->mean.v[j] = m;
      var.v[j] = v;
      n.bn->inv_std.v[j] = 1.0 / std::sqrt(v + kBnEps);
    }
    if (collect) {
      // Layer identity is the gamma parameter's name.
      const Node& gn = impl_->nodes[gamma];
      collect->items.push_back({gn.pname, n.bn->mean, var, r});
    }
  } else {
    for (int j = 0; j < c; ++j) {
      n.bn->mean.v[j] = run_mean->v[j];
      n.bn->inv_std.v[j] = 1.0 / std::sqrt(run_var->v[j] + kBnEps);
    }
  }
  n.bn->xhat = Tensor(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      double xh = (X.at(i, j) - n.bn->mean.v[j]) * n.bn->inv_std.v[j];
      n.bn->xhat.at(i, j) = xh;
      n.val.at(i, j) = G.v[j] * xh + B.v[j];
    }
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::pair_power(Id w, PairPowerSpec spec) {
  const Tensor& W = value(w);
  impl_->check(W.rows == spec.S * spec.L && W.cols == 2 * spec.M,
               "pair_power: W must be (S*L) x 2M");
  impl_->check(static_cast<int>(spec.h.size()) == spec.K * spec.L * spec.M,
               "pair_power: channel size mismatch");
  impl_->check(static_cast<int>(spec.gate.size()) == spec.S * spec.L,
               "pair_power: gate size mismatch");
  Node n;
  n.op = Op::PairPower;
  n.in = {w};
  n.pp = std::make_unique<PairPowerCache>();
  n.pp->spec = std::move(spec);
  const PairPowerSpec& sp = n.pp->spec;
  n.pp->z.assign(static_cast<size_t>(sp.K) * sp.S, {0.0, 0.0});
  n.val = Tensor(sp.K, sp.S);
  for (int k = 0; k < sp.K; ++k)
    for (int s = 0; s < sp.S; ++s) {
      std::complex<double> z{0.0, 0.0};
      for (int l = 0; l < sp.L; ++l) {
        double g = sp.gate[s * sp.L + l];
        if (g == 0.0) continue;
        const std::complex<double>* hk = &sp.h[(static_cast<size_t>(k) * sp.L + l) * sp.M];
        const double* wr = &W.v[(static_cast<size_t>(s) * sp.L + l) * W.cols];
        const double* wi = wr + sp.M;
        std::complex<double> acc{0.0, 0.0};
        for (int m = 0; m < sp.M; ++m)
          acc += std::conj(hk[m]) * std::complex<double>(wr[m], wi[m]);
        z += g * acc;
      }
      n.pp->z[static_cast<size_t>(k) * sp.S + s] = z;
      n.val.at(k, s) = std::norm(z);
    }
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

Tape::Id Tape::mu_solve_dirs(Id mu, MuSolveSpec spec) {
  const Tensor& MU = value(mu);
  impl_->check(MU.rows == spec.K && MU.cols == 1, "mu_solve_dirs: mu must be K x 1");
  impl_->check(static_cast<int>(spec.h.size()) == spec.K * spec.M,
               "mu_solve_dirs: channel size mismatch");
  Node n;
  n.op = Op::MuSolveDirs;
  n.in = {mu};
  n.ms = std::make_unique<MuSolveCache>();
  n.ms->spec = std::move(spec);
  const MuSolveSpec& sp = n.ms->spec;
  Eigen::MatrixXcd H(sp.M, sp.K);
  for (int k = 0; k < sp.K; ++k)
    for (int m = 0; m < sp.M; ++m) H(m, k) = sp.h[static_cast<size_t>(k) * sp.M + m];
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Identity(sp.M, sp.M);
  for (int k = 0; k < sp.K; ++k)
    A += (MU.v[k] / sp.sigma2) * (H.col(k) * H.col(k).adjoint());
  n.ms->llt.compute(A);
  if (n.ms->llt.info() != Eigen::Success)
    throw NumericalError("mu_solve_dirs: factorization failed");
  n.ms->dirs = n.ms->llt.solve(H);
  n.val = Tensor(sp.K, 2 * sp.M);
  for (int k = 0; k < sp.K; ++k)
    for (int m = 0; m < sp.M; ++m) {
      n.val.at(k, m) = n.ms->dirs(m, k).real();
      n.val.at(k, sp.M + m) = n.ms->dirs(m, k).imag();
    }
  n.needs_grad = impl_->any_grad(n.in);
  return impl_->push(std::move(n));
}

// ---------------------------------------------------------------------------
// Backward pass.
// ---------------------------------------------------------------------------

void Tape::backward(Id output, GradStore& grads, double seed_scalar,
                    const Tensor* seed) const {
  const auto& nodes = impl_->nodes;
  if (output < 0 || output >= static_cast<int>(nodes.size()))
    throw ShapeError("backward: invalid output node");
  const Tensor& out_val = nodes[output].val;
  std::vector<Tensor> adj(output + 1);
  std::vector<uint8_t> has(output + 1, 0);
  auto touch = [&](int id) -> Tensor& {
    if (!has[id]) {
      adj[id] = Tensor(nodes[id].val.rows, nodes[id].val.cols);
      has[id] = 1;
    }
    return adj[id];
  };
  if (seed != nullptr) {
    if (!seed->same_shape(out_val))
      throw ShapeError("backward: seed shape mismatch");
    touch(output) = *seed;
  } else {
    if (out_val.rows != 1 || out_val.cols != 1)
      throw ShapeError("backward: scalar seed on non-scalar output");
    touch(output) = Tensor::scalar(seed_scalar);
  }

  for (int id = output; id >= 0; --id) {
    const Node& n = nodes[id];
    if (!has[id] || !n.needs_grad) continue;
    const Tensor& g = adj[id];
    switch (n.op) {
      case Op::Const:
        break;
      case Op::Param:
        grads.accumulate(n.pname, g);
        break;
      case Op::MatMul: {
        const Tensor& A = nodes[n.in[0]].val;
        const Tensor& B = nodes[n.in[1]].val;
        if (nodes[n.in[0]].needs_grad)
          emap(touch(n.in[0])) += emap(g) * emap(B).transpose();
        if (nodes[n.in[1]].needs_grad)
          emap(touch(n.in[1])) += emap(A).transpose() * emap(g);
        break;
      }
      case Op::Transpose:
        if (nodes[n.in[0]].needs_grad)
          emap(touch(n.in[0])) += emap(g).transpose();
        break;
      case Op::Add:
        for (int s = 0; s < 2; ++s)
          if (nodes[n.in[s]].needs_grad) {
            Tensor& t = touch(n.in[s]);
            for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i];
          }
        break;
      case Op::Sub: {
        if (nodes[n.in[0]].needs_grad) {
          Tensor& t = touch(n.in[0]);
          for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i];
        }
        if (nodes[n.in[1]].needs_grad) {
          Tensor& t = touch(n.in[1]);
          for (size_t i = 0; i < t.v.size(); ++i) t.v[i] -= g.v[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& A = nodes[n.in[0]].val;
        const Tensor& B = nodes[n.in[1]].val;
        if (nodes[n.in[0]].needs_grad) {
          Tensor& t = touch(n.in[0]);
          for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i] * B.v[i];
        }
        if (nodes[n.in[1]].needs_grad) {
          Tensor& t = touch(n.in[1]);
          for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i] * A.v[i];
        }
        break;
      }
      case Op::Div: {
        const Tensor& A = nodes[n.in[0]].val;
        const Tensor& B = nodes[n.in[1]].val;
        if (nodes[n.in[0]].needs_grad) {
          Tensor& t = touch(n.in[0]);
          for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i] / B.v[i];
        }
        if (nodes[n.in[1]].needs_grad) {
          Tensor& t = touch(n.in[1]);
          for (size_t i = 0; i < t.v.size(); ++i)
            t.v[i] -= g.v[i] * A.v[i] / (B.v[i] * B.v[i]);
        }
        break;
      }
      case Op::AddRowVec: {
        if (nodes[n.in[0]].needs_grad) {
          Tensor& t = touch(n.in[0]);
          for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i];
        }
        if (nodes[n.in[1]].needs_grad) {
          Tensor& t = touch(n.in[1]);
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) t.v[c] += g.at(r, c);
        }
        break;
      }
      case Op::MulColVec: {
        const Tensor& X = nodes[n.in[0]].val;
        const Tensor& V = nodes[n.in[1]].val;
        if (nodes[n.in[0]].needs_grad) {
          Tensor& t = touch(n.in[0]);
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) t.at(r, c) += g.at(r, c) * V.v[r];
        }
        if (nodes[n.in[1]].needs_grad) {
          Tensor& t = touch(n.in[1]);
          for (int r = 0; r < g.rows; ++r) {
            double s = 0;
            for (int c = 0; c < g.cols; ++c) s += g.at(r, c) * X.at(r, c);
            t.v[r] += s;
          }
        }
        break;
      }
      case Op::Relu: {
        const Tensor& X = nodes[n.in[0]].val;
        Tensor& t = touch(n.in[0]);
        for (size_t i = 0; i < t.v.size(); ++i)
          if (X.v[i] > 0) t.v[i] += g.v[i];
        break;
      }
      case Op::Tanh: {
        Tensor& t = touch(n.in[0]);
        for (size_t i = 0; i < t.v.size(); ++i)
          t.v[i] += g.v[i] * (1.0 - n.val.v[i] * n.val.v[i]);
        break;
      }
      case Op::Log: {
        const Tensor& X = nodes[n.in[0]].val;
        Tensor& t = touch(n.in[0]);
        for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i] / X.v[i];
        break;
      }
      case Op::Exp: {
        Tensor& t = touch(n.in[0]);
        for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i] * n.val.v[i];
        break;
      }
      case Op::Sqrt: {
        Tensor& t = touch(n.in[0]);
        for (size_t i = 0; i < t.v.size(); ++i)
          t.v[i] += g.v[i] * 0.5 / n.val.v[i];
        break;
      }
      case Op::Square: {
        const Tensor& X = nodes[n.in[0]].val;
        Tensor& t = touch(n.in[0]);
        for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i] * 2.0 * X.v[i];
        break;
      }
      case Op::ScaleShift: {
        Tensor& t = touch(n.in[0]);
        for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i] * n.a;
        break;
      }
      case Op::MaxConst: {
        const Tensor& X = nodes[n.in[0]].val;
        Tensor& t = touch(n.in[0]);
        for (size_t i = 0; i < t.v.size(); ++i)
          if (X.v[i] > n.a) t.v[i] += g.v[i];
        break;
      }
      case Op::SumAll: {
        Tensor& t = touch(n.in[0]);
        for (auto& x : t.v) x += g.v[0];
        break;
      }
      case Op::MeanAll: {
        Tensor& t = touch(n.in[0]);
        double s = g.v[0] / static_cast<double>(t.v.size());
        for (auto& x : t.v) x += s;
        break;
      }
      case Op::RowSums: {
        Tensor& t = touch(n.in[0]);
        for (int r = 0; r < t.rows; ++r)
          for (int c = 0; c < t.cols; ++c) t.at(r, c) += g.v[r];
        break;
      }
      case Op::ColMeans: {
        Tensor& t = touch(n.in[0]);
        for (int r = 0; r < t.rows; ++r)
          for (int c = 0; c < t.cols; ++c) t.at(r, c) += g.v[c] / t.rows;
        break;
      }
      case Op::ConcatCols: {
        int off = 0;
        for (int in_id : n.in) {
          const Tensor& X = nodes[in_id].val;
          if (nodes[in_id].needs_grad) {
            Tensor& t = touch(in_id);
            for (int r = 0; r < X.rows; ++r)
              for (int c = 0; c < X.cols; ++c) t.at(r, c) += g.at(r, off + c);
          }
          off += X.cols;
        }
        break;
      }
      case Op::ConcatRows: {
        int off = 0;
        for (int in_id : n.in) {
          const Tensor& X = nodes[in_id].val;
          if (nodes[in_id].needs_grad) {
            Tensor& t = touch(in_id);
            for (int r = 0; r < X.rows; ++r)
              for (int c = 0; c < X.cols; ++c) t.at(r, c) += g.at(off + r, c);
          }
          off += X.rows;
        }
        break;
      }
      case Op::SliceRows: {
        Tensor& t = touch(n.in[0]);
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < g.cols; ++c) t.at(n.i0 + r, c) += g.at(r, c);
        break;
      }
      case Op::SliceCols: {
        Tensor& t = touch(n.in[0]);
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < g.cols; ++c) t.at(r, n.i0 + c) += g.at(r, c);
        break;
      }
      case Op::Reshape: {
        Tensor& t = touch(n.in[0]);
        for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i];
        break;
      }
      case Op::RepeatRows: {
        Tensor& t = touch(n.in[0]);
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < g.cols; ++c) t.v[c] += g.at(r, c);
        break;
      }
      case Op::RepeatEachRow: {
        Tensor& t = touch(n.in[0]);
        for (int r = 0; r < t.rows; ++r)
          for (int k = 0; k < n.i0; ++k)
            for (int c = 0; c < t.cols; ++c)
              t.at(r, c) += g.at(r * n.i0 + k, c);
        break;
      }
      case Op::TileRows: {
        Tensor& t = touch(n.in[0]);
        for (int k = 0; k < n.i0; ++k)
          for (int r = 0; r < t.rows; ++r)
            for (int c = 0; c < t.cols; ++c)
              t.at(r, c) += g.at(k * t.rows + r, c);
        break;
      }
      case Op::GroupMeanRows: {
        Tensor& t = touch(n.in[0]);
        int gsz = t.rows / n.i0;
        for (int gi = 0; gi < n.i0; ++gi)
          for (int r = 0; r < gsz; ++r)
            for (int c = 0; c < t.cols; ++c)
              t.at(gi * gsz + r, c) += g.at(gi, c) / gsz;
        break;
      }
      case Op::GroupMeanStrided: {
        Tensor& t = touch(n.in[0]);
        int cnt = t.rows / n.i0;
        for (int gi = 0; gi < n.i0; ++gi)
          for (int r = 0; r < cnt; ++r)
            for (int c = 0; c < t.cols; ++c)
              t.at(r * n.i0 + gi, c) += g.at(gi, c) / cnt;
        break;
      }
      case Op::GatherRows: {
        Tensor& t = touch(n.in[0]);
        for (size_t r = 0; r < n.idx.size(); ++r)
          for (int c = 0; c < t.cols; ++c)
            t.at(n.idx[r], c) += g.at(static_cast<int>(r), c);
        break;
      }
      case Op::ScatterRows: {
        Tensor& t = touch(n.in[0]);
        for (size_t r = 0; r < n.idx.size(); ++r)
          for (int c = 0; c < t.cols; ++c)
            t.at(static_cast<int>(r), c) += g.at(n.idx[r], c);
        break;
      }
      case Op::MaskedSoftmax: {
        Tensor& t = touch(n.in[0]);
        double dot = 0;
        for (size_t i = 0; i < n.keep.size(); ++i)
          if (n.keep[i]) dot += n.val.v[i] * g.v[i];
        for (size_t i = 0; i < n.keep.size(); ++i)
          if (n.keep[i]) t.v[i] += n.val.v[i] * (g.v[i] - dot);
        break;
      }
      case Op::Pick: {
        Tensor& t = touch(n.in[0]);
        t.v[n.i0] += g.v[0];
        break;
      }
      case Op::BatchNorm: {
        const BnCache& bn = *n.bn;
        const Tensor& G = nodes[n.in[1]].val;
        const int r = g.rows, c = g.cols;
        if (nodes[n.in[2]].needs_grad) {
          Tensor& tb = touch(n.in[2]);
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) tb.v[j] += g.at(i, j);
        }
        if (nodes[n.in[1]].needs_grad) {
          Tensor& tg = touch(n.in[1]);
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) tg.v[j] += g.at(i, j) * bn.xhat.at(i, j);
        }
        if (nodes[n.in[0]].needs_grad && r > 0) {
          Tensor& tx = touch(n.in[0]);
          if (bn.used_batch_stats) {
            // dX = inv_std/r * (r*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
            for (int j = 0; j < c; ++j) {
              double s1 = 0, s2 = 0;
              for (int i = 0; i < r; ++i) {
                double dxh = g.at(i, j) * G.v[j];
                s1 += dxh;
                s2 += dxh * bn.xhat.at(i, j);
              }
              for (int i = 0; i < r; ++i) {
                double dxh = g.at(i, j) * G.v[j];
                tx.at(i, j) += bn.inv_std.v[j] / r *
                               (r * dxh - s1 - bn.xhat.at(i, j) * s2);
              }
            }
          } else {
            for (int i = 0; i < r; ++i)
              for (int j = 0; j < c; ++j)
                tx.at(i, j) += g.at(i, j) * G.v[j] * bn.inv_std.v[j];
          }
        }
        break;
      }
      case Op::PairPower: {
        const PairPowerSpec& sp = n.pp->spec;
        Tensor& t = touch(n.in[0]);
        for (int k = 0; k < sp.K; ++k)
          for (int s = 0; s < sp.S; ++s) {
            std::complex<double> zbar =
                2.0 * g.at(k, s) * n.pp->z[static_cast<size_t>(k) * sp.S + s];
            if (zbar == std::complex<double>(0.0, 0.0)) continue;
            for (int l = 0; l < sp.L; ++l) {
              double gt = sp.gate[s * sp.L + l];
              if (gt == 0.0) continue;
              const std::complex<double>* hk =
                  &sp.h[(static_cast<size_t>(k) * sp.L + l) * sp.M];
              double* wr = &t.v[(static_cast<size_t>(s) * sp.L + l) * t.cols];
              double* wi = wr + sp.M;
              for (int m = 0; m < sp.M; ++m) {
                std::complex<double> wbar = gt * hk[m] * zbar;
                wr[m] += wbar.real();
                wi[m] += wbar.imag();
              }
            }
          }
        break;
      }
      case Op::MuSolveDirs: {
        const MuSolveSpec& sp = n.ms->spec;
        Tensor& t = touch(n.in[0]);
        // mu_i adjoint: -(1/sigma2) * sum_k Re[(s_k^H h_i)(h_i^H d_k)]
        // with s_k = A^{-1} dbar_k (A is Hermitian).
        Eigen::MatrixXcd dbar(sp.M, sp.K);
        for (int k = 0; k < sp.K; ++k)
          for (int m = 0; m < sp.M; ++m)
            dbar(m, k) = std::complex<double>(g.at(k, m), g.at(k, sp.M + m));
        Eigen::MatrixXcd S = n.ms->llt.solve(dbar);
        for (int i = 0; i < sp.K; ++i) {
          Eigen::Map<const Eigen::VectorXcd> hi(&sp.h[static_cast<size_t>(i) * sp.M],
                                                sp.M);
          double acc = 0;
          for (int k = 0; k < sp.K; ++k) {
            std::complex<double> sh = S.col(k).dot(hi);  // s_k^H h_i
            std::complex<double> hd = hi.dot(n.ms->dirs.col(k));  // h_i^H d_k
            acc += (sh * hd).real();
          }
          t.v[i] -= acc / sp.sigma2;
        }
        break;
      }
    }
  }
}

double finite_diff_check(ParamStore& params,
                         const std::function<Tape::Id(Tape&)>& build,
                         double step) {
  if (!(step >= 1e-8 && step <= 1e-4))
    throw std::invalid_argument("finite_diff_check: step outside [1e-8, 1e-4]");
  GradStore grads;
  {
    Tape tape;
    Tape::Id out = build(tape);
    tape.backward(out, grads);
  }
  auto eval = [&]() {
    Tape tape;
    return tape.value(build(tape)).item();
  };
  double max_rel = 0.0;
  for (auto& [name, entry] : params) {
    if (!entry.trainable) continue;
    for (size_t i = 0; i < entry.value.v.size(); ++i) {
      double saved = entry.value.v[i];
      entry.value.v[i] = saved + step;
      double fp = eval();
      entry.value.v[i] = saved - step;
      double fm = eval();
      entry.value.v[i] = saved;
      // Differences below a few ulps of f are below the oracle's resolution;
      // the central difference measures zero there.
      double resolution =
          8.0 * std::numeric_limits<double>::epsilon() *
          std::max(std::abs(fp), std::abs(fm));
      double diff = fp - fm;
      double gfd = std::abs(diff) <= resolution ? 0.0 : diff / (2.0 * step);
      double gad = grads.has(name) ? grads.at(name).v[i] : 0.0;
      double rel = std::abs(gad - gfd) / std::max(std::abs(gfd), 1e-8);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

double gradient_check_ratio(ParamStore& params,
                            const std::function<Tape::Id(Tape&)>& build,
                            double step, double rtol) {
  if (!(step >= 1e-8 && step <= 1e-4))
    throw std::invalid_argument("gradient_check_ratio: step outside [1e-8, 1e-4]");
  GradStore grads;
  {
    Tape tape;
    Tape::Id out = build(tape);
    tape.backward(out, grads);
  }
  auto eval = [&]() {
    Tape tape;
    return tape.value(build(tape)).item();
  };
  double f0 = std::abs(eval());
  double atol = 256.0 * std::numeric_limits<double>::epsilon() *
                std::max(f0, 1.0) / (2.0 * step);
  double worst = 0.0;
  for (auto& [name, entry] : params) {
    if (!entry.trainable) continue;
    for (size_t i = 0; i < entry.value.v.size(); ++i) {
      double saved = entry.value.v[i];
      entry.value.v[i] = saved + step;
      double fp = eval();
      entry.value.v[i] = saved - step;
      double fm = eval();
      entry.value.v[i] = saved;
      double gfd = (fp - fm) / (2.0 * step);
      double gad = grads.has(name) ? grads.at(name).v[i] : 0.0;
      double bound = rtol * std::max(std::abs(gad), std::abs(gfd)) + atol;
      worst = std::max(worst, std::abs(gad - gfd) / bound);
    }
  }
  return worst;
}

}  // namespace mdra
