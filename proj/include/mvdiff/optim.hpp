#pragma once

#include <cmath>
#include <map>
#include <string>

#include "mvdiff/autodiff.hpp"
#include "mvdiff/nn.hpp"

namespace mvdiff {

struct OptimizerConfig {
  std::string kind = "adam";  // "adam" | "sgd"
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.98;  // AdamW-style moments
  double eps = 1e-6;
  double warmup_init_lr = 1e-6;
  int warmup_steps = 1000;
};

// First-order optimizer with linear learning-rate warmup. Parameters are
// re-quantized to the float32 lattice after every update so checkpoints
// stay lossless.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) {
    require(cfg_.kind == "adam" || cfg_.kind == "sgd",
            "optimizer: unknown kind " + cfg_.kind);
  }

  double current_lr() const {
    if (step_ < int64_t(cfg_.warmup_steps))
      return cfg_.warmup_init_lr + (cfg_.lr - cfg_.warmup_init_lr) *
                                       double(step_) /
                                       double(cfg_.warmup_steps);
    return cfg_.lr;
  }

  int64_t step_count() const { return step_; }

  // Applies gradients collected on the graph to every trainable registry
  // entry that participated in the forward pass.
  void step(ParamRegistry& reg, ad::Graph& g) {
    const double lr = current_lr();
    ++step_;
    std::map<const Tensor*, const ParamEntry*> trainable;
    for (const auto& e : reg.entries())
      if (e.trainable) trainable[e.tensor] = &e;

    for (const auto& [tensor, node] : g.params()) {
      auto it = trainable.find(tensor);
      if (it == trainable.end()) continue;
      if (node->grad.data.empty()) continue;
      Tensor& p = *tensor;
      const Tensor& grad = node->grad;
      if (cfg_.kind == "sgd") {
        for (size_t i = 0; i < p.data.size(); ++i)
          p.data[i] -= lr * grad.data[i];
      } else {
        Moments& mom = moments_[it->second->name];
        if (mom.m.data.empty()) {
          mom.m = Tensor(p.shape);
          mom.v = Tensor(p.shape);
        }
        mom.t += 1;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(mom.t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(mom.t));
        for (size_t i = 0; i < p.data.size(); ++i) {
          const double gi = grad.data[i];
          mom.m.data[i] = cfg_.beta1 * mom.m.data[i] + (1 - cfg_.beta1) * gi;
          mom.v.data[i] = cfg_.beta2 * mom.v.data[i] + (1 - cfg_.beta2) * gi * gi;
          const double mhat = mom.m.data[i] / bc1;
          const double vhat = mom.v.data[i] / bc2;
          p.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
      }
      quantize_f32(p);
    }
  }

 private:
  struct Moments {
    Tensor m, v;
    int64_t t = 0;
  };
  OptimizerConfig cfg_;
  int64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace mvdiff
