#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mdra/rng.hpp"
#include "mdra/tensor.hpp"

namespace mdra {

/// Flat named collection of real arrays. Trainable entries receive gradient
/// updates; non-trainable entries (batch-norm running statistics) are carried
/// through checkpoints but skipped by the optimizer. std::map keeps names in
/// a deterministic order and gives stable addresses to live tapes.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };

  Tensor& create(const std::string& name, int rows, int cols,
                 bool trainable = true) {
    auto [it, inserted] = entries_.try_emplace(name);
    if (!inserted) throw ShapeError("duplicate parameter: " + name);
    it->second.value = Tensor(rows, cols);
    it->second.trainable = trainable;
    return it->second.value;
  }

  /// Xavier-uniform weight init: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
  Tensor& create_xavier(const std::string& name, int fan_in, int fan_out,
                        RngStream& rng) {
    Tensor& t = create(name, fan_in, fan_out);
    double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& x : t.v) x = rng.uniform(-a, a);
    return t;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  Tensor& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ShapeError("unknown parameter: " + name);
    return it->second.value;
  }
  const Tensor& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ShapeError("unknown parameter: " + name);
    return it->second.value;
  }
  bool trainable(const std::string& name) const {
    return entries_.at(name).trainable;
  }

  size_t trainable_size() const {
    size_t n = 0;
    for (const auto& [k, e] : entries_)
      if (e.trainable) n += e.value.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  size_t count() const { return entries_.size(); }

 private:
  std::map<std::string, Entry> entries_;
};

/// Gradient accumulator keyed like a ParamStore. Addition order is the
/// caller's responsibility; merging stores in a fixed order keeps training
/// bitwise reproducible.
class GradStore {
 public:
  void accumulate(const std::string& name, const Tensor& g) {
    auto it = grads_.find(name);
    if (it == grads_.end()) {
      grads_.emplace(name, g);
      return;
    }
    Tensor& t = it->second;
    if (!t.same_shape(g)) throw ShapeError("gradient shape mismatch: " + name);
    for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i];
  }

  void merge(const GradStore& other) {
    for (const auto& [k, g] : other.grads_) accumulate(k, g);
  }

  void scale(double s) {
    for (auto& [k, g] : grads_)
      for (auto& x : g.v) x *= s;
  }

  double global_norm() const {
    double s = 0;
    for (const auto& [k, g] : grads_)
      for (double x : g.v) s += x * x;
    return std::sqrt(s);
  }

  /// Clips to `max_norm` in place; returns the pre-clip norm.
  double clip_global_norm(double max_norm) {
    double n = global_norm();
    if (n > max_norm && n > 0) scale(max_norm / n);
    return n;
  }

  bool has(const std::string& name) const { return grads_.count(name) > 0; }
  const Tensor& at(const std::string& name) const { return grads_.at(name); }
  void clear() { grads_.clear(); }
  bool empty() const { return grads_.empty(); }

  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

  /// Flattens gradients for the trainable entries of `ref`, in name order,
  /// with zeros for entries that received no gradient.
  std::vector<double> flatten(const ParamStore& ref) const {
    std::vector<double> out;
    for (const auto& [name, e] : ref) {
      if (!e.trainable) continue;
      auto it = grads_.find(name);
      if (it == grads_.end()) {
        out.insert(out.end(), e.value.size(), 0.0);
      } else {
        out.insert(out.end(), it->second.v.begin(), it->second.v.end());
      }
    }
    return out;
  }

 private:
  std::map<std::string, Tensor> grads_;
};

}  // namespace mdra
