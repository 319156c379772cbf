#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mvdiff/autodiff.hpp"
#include "mvdiff/rng.hpp"
#include "mvdiff/tensor.hpp"

namespace mvdiff {

// Snaps every entry to its nearest binary32 value. Parameters live on this
// sub-lattice of doubles so the float32 checkpoint payload round-trips
// bit-exactly.
inline void quantize_f32(Tensor& t) {
  for (double& v : t.data) v = double(float(v));
}

struct ParamEntry {
  std::string name;
  Tensor* tensor = nullptr;
  bool trainable = true;
};

// Flat registry of named parameter tensors; owning modules register their
// tensors once at construction. Iteration order is registration order and
// defines the checkpoint layout.
class ParamRegistry {
 public:
  void add(const std::string& name, Tensor& t, bool trainable = true) {
    require(!index_.count(name), "param registry: duplicate name " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, &t, trainable});
  }

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  Tensor* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : entries_[it->second].tensor;
  }

  void set_trainable_all(bool trainable) {
    for (auto& e : entries_) e.trainable = trainable;
  }

  // Marks parameters whose name starts with the prefix.
  void set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (auto& e : entries_)
      if (e.name.rfind(prefix, 0) == 0) e.trainable = trainable;
  }

  int64_t count_trainable() const {
    int64_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.tensor->numel();
    return n;
  }

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, size_t> index_;
};

// y = x W + b with W {in, out}.
struct Linear {
  Tensor W, b;

  Linear() = default;
  Linear(int64_t in, int64_t out, Rng& rng, double init_scale = -1.0) {
    const double bound =
        init_scale >= 0 ? init_scale : 1.0 / std::sqrt(double(in));
    W = Tensor::uniform({in, out}, -bound, bound, rng);
    b = Tensor({1, out});
    quantize_f32(W);
  }

  static Linear zeros(int64_t in, int64_t out) {
    Linear l;
    l.W = Tensor({in, out});
    l.b = Tensor({1, out});
    return l;
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) {
    reg.add(prefix + ".W", W);
    reg.add(prefix + ".b", b);
  }

  ad::NodePtr fwd(ad::Graph& g, ad::NodePtr x) {
    return g.add(g.matmul(std::move(x), g.param(W)), g.param(b));
  }
};

// Linear / SiLU / Linear.
struct Mlp2 {
  Linear fc1, fc2;

  Mlp2() = default;
  Mlp2(int64_t in, int64_t hidden, int64_t out, Rng& rng)
      : fc1(in, hidden, rng), fc2(hidden, out, rng) {}

  void register_params(ParamRegistry& reg, const std::string& prefix) {
    fc1.register_params(reg, prefix + ".fc1");
    fc2.register_params(reg, prefix + ".fc2");
  }

  ad::NodePtr fwd(ad::Graph& g, ad::NodePtr x) {
    return fc2.fwd(g, g.silu(fc1.fwd(g, std::move(x))));
  }
};

}  // namespace mvdiff
