#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvdiff/tensor.hpp"

namespace mvdiff::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated on first accumulation during backward
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;
};

inline void accumulate(Node& n, const Tensor& g) {
  if (!n.requires_grad) return;
  if (n.grad.data.empty()) n.grad = Tensor(n.val.shape);
  for (size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
}

// Reduces a full-shape gradient to a broadcast operand's shape ({1,c},
// {r,1} or {1,1}).
inline Tensor reduce_to_shape(const Tensor& g, const std::vector<int64_t>& shape) {
  Tensor out(shape);
  if (g.shape == shape) {
    out.data = g.data;
    return out;
  }
  const int64_t r = g.rows(), c = g.cols();
  if (out.numel() == 1) {
    out.data[0] = sum_all(g);
    return out;
  }
  if (out.rows() == 1 && out.cols() == c) {
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) out.data[size_t(j)] += g.at(i, j);
    return out;
  }
  if (out.cols() == 1 && out.rows() == r) {
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) out.data[size_t(i)] += g.at(i, j);
    return out;
  }
  throw Error("reduce_to_shape: unsupported broadcast");
}

// Reverse-mode tape. Creation order is the topological order; backward walks
// it in reverse. With gradients disabled (inference) nodes are not retained,
// so intermediates free as soon as their last consumer releases them.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  NodePtr constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    return n;
  }

  // One leaf per distinct parameter tensor per graph; repeated use of the
  // same tensor accumulates into a single gradient.
  NodePtr param(Tensor& storage) {
    if (grad_enabled_) {
      auto it = param_map_.find(&storage);
      if (it != param_map_.end()) return it->second;
    }
    auto n = std::make_shared<Node>();
    n->val = storage;
    n->requires_grad = grad_enabled_;
    if (grad_enabled_) {
      param_map_[&storage] = n;
      params_.emplace_back(&storage, n);
      order_.push_back(n);
    }
    return n;
  }

  const std::vector<std::pair<Tensor*, NodePtr>>& params() const {
    return params_;
  }

  void backward(const NodePtr& loss) {
    require(grad_enabled_, "backward: graph built without gradients");
    require(loss->val.numel() == 1, "backward: loss must be scalar");
    loss->grad = Tensor::full(loss->val.shape, 1.0);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      Node& n = **it;
      if (!n.requires_grad || n.grad.data.empty() || !n.backprop) continue;
      n.backprop(n);
    }
  }

  // ---- primitive ops ----

  NodePtr add(NodePtr a, NodePtr b) {
    return binary(std::move(a), std::move(b), mvdiff::add,
                  [](const Tensor& g, const Node& n, Node& pa, Node& pb) {
                    accumulate(pa, reduce_to_shape(g, pa.val.shape));
                    accumulate(pb, reduce_to_shape(g, pb.val.shape));
                    (void)n;
                  });
  }

  NodePtr sub(NodePtr a, NodePtr b) {
    return binary(std::move(a), std::move(b), mvdiff::sub,
                  [](const Tensor& g, const Node& n, Node& pa, Node& pb) {
                    accumulate(pa, reduce_to_shape(g, pa.val.shape));
                    accumulate(pb,
                               reduce_to_shape(mvdiff::scale(g, -1.0),
                                               pb.val.shape));
                    (void)n;
                  });
  }

  NodePtr mul(NodePtr a, NodePtr b) {
    return binary(std::move(a), std::move(b), mvdiff::mul,
                  [](const Tensor& g, const Node& n, Node& pa, Node& pb) {
                    (void)n;
                    // broadcast the smaller operand up before multiplying
                    accumulate(pa, reduce_to_shape(mvdiff::mul(g, pb.val),
                                                   pa.val.shape));
                    Tensor gb = mvdiff::mul(resize_like(pa.val, g), g);
                    accumulate(pb, reduce_to_shape(gb, pb.val.shape));
                  });
  }

  NodePtr scale(NodePtr a, double s) {
    Tensor v = mvdiff::scale(a->val, s);
    return unary(std::move(a), std::move(v), [s](const Tensor& g, Node& pa) {
      accumulate(pa, mvdiff::scale(g, s));
    });
  }

  NodePtr add_scalar(NodePtr a, double s) {
    Tensor v = mvdiff::add_scalar(a->val, s);
    return unary(std::move(a), std::move(v),
                 [](const Tensor& g, Node& pa) { accumulate(pa, g); });
  }

  NodePtr matmul(NodePtr a, NodePtr b) {
    Tensor v = mvdiff::matmul(a->val, b->val);
    return binary_v(std::move(a), std::move(b), std::move(v),
                    [](const Tensor& g, const Node&, Node& pa, Node& pb) {
                      Tensor ga({pa.val.rows(), pa.val.cols()});
                      as_matrix(ga).noalias() =
                          as_matrix(g) * as_matrix(pb.val).transpose();
                      accumulate(pa, ga);
                      Tensor gb({pb.val.rows(), pb.val.cols()});
                      as_matrix(gb).noalias() =
                          as_matrix(pa.val).transpose() * as_matrix(g);
                      accumulate(pb, gb);
                    });
  }

  // a * b^T without materializing the transpose.
  NodePtr matmul_nt(NodePtr a, NodePtr b) {
    require(a->val.cols() == b->val.cols(), "matmul_nt: dim mismatch");
    Tensor v({a->val.rows(), b->val.rows()});
    as_matrix(v).noalias() = as_matrix(a->val) * as_matrix(b->val).transpose();
    return binary_v(std::move(a), std::move(b), std::move(v),
                    [](const Tensor& g, const Node&, Node& pa, Node& pb) {
                      Tensor ga({pa.val.rows(), pa.val.cols()});
                      as_matrix(ga).noalias() = as_matrix(g) * as_matrix(pb.val);
                      accumulate(pa, ga);
                      Tensor gb({pb.val.rows(), pb.val.cols()});
                      as_matrix(gb).noalias() =
                          as_matrix(g).transpose() * as_matrix(pa.val);
                      accumulate(pb, gb);
                    });
  }

  // Row-wise layer normalization without learned affine.
  NodePtr layernorm(NodePtr a, double eps = 1e-6) {
    const int64_t r = a->val.rows(), c = a->val.cols();
    Tensor v(a->val.shape);
    auto rstd = std::make_shared<std::vector<double>>(size_t(r));
    for (int64_t i = 0; i < r; ++i) {
      double mean = 0;
      for (int64_t j = 0; j < c; ++j) mean += a->val.at(i, j);
      mean /= double(c);
      double var = 0;
      for (int64_t j = 0; j < c; ++j) {
        const double d = a->val.at(i, j) - mean;
        var += d * d;
      }
      var /= double(c);
      const double rs = 1.0 / std::sqrt(var + eps);
      (*rstd)[size_t(i)] = rs;
      for (int64_t j = 0; j < c; ++j)
        v.at(i, j) = (a->val.at(i, j) - mean) * rs;
    }
    NodePtr out = unary_keep_val(std::move(a), std::move(v));
    if (out->requires_grad)
      out->backprop = [rstd](Node& n) {
        Node& pa = *n.parents[0];
        const int64_t r2 = n.val.rows(), c2 = n.val.cols();
        Tensor ga(pa.val.shape);
        for (int64_t i = 0; i < r2; ++i) {
          double gmean = 0, gymean = 0;
          for (int64_t j = 0; j < c2; ++j) {
            gmean += n.grad.at(i, j);
            gymean += n.grad.at(i, j) * n.val.at(i, j);
          }
          gmean /= double(c2);
          gymean /= double(c2);
          const double rs = (*rstd)[size_t(i)];
          for (int64_t j = 0; j < c2; ++j)
            ga.at(i, j) =
                rs * (n.grad.at(i, j) - gmean - n.val.at(i, j) * gymean);
        }
        accumulate(pa, ga);
      };
    return out;
  }

  // Row-wise softmax with max subtraction; input is expected pre-scaled.
  NodePtr softmax_rows(NodePtr a) {
    const int64_t r = a->val.rows(), c = a->val.cols();
    Tensor v(a->val.shape);
    for (int64_t i = 0; i < r; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < c; ++j) m = std::max(m, a->val.at(i, j));
      double denom = 0;
      for (int64_t j = 0; j < c; ++j) {
        v.at(i, j) = std::exp(a->val.at(i, j) - m);
        denom += v.at(i, j);
      }
      for (int64_t j = 0; j < c; ++j) v.at(i, j) /= denom;
    }
    NodePtr out = unary_keep_val(std::move(a), std::move(v));
    if (out->requires_grad)
      out->backprop = [](Node& n) {
        Node& pa = *n.parents[0];
        const int64_t r2 = n.val.rows(), c2 = n.val.cols();
        Tensor ga(pa.val.shape);
        for (int64_t i = 0; i < r2; ++i) {
          double dot = 0;
          for (int64_t j = 0; j < c2; ++j)
            dot += n.grad.at(i, j) * n.val.at(i, j);
          for (int64_t j = 0; j < c2; ++j)
            ga.at(i, j) = n.val.at(i, j) * (n.grad.at(i, j) - dot);
        }
        accumulate(pa, ga);
      };
    return out;
  }

  NodePtr sin(NodePtr a) {
    Tensor v = a->val;
    for (double& x : v.data) x = std::sin(x);
    NodePtr in = a;
    return unary(std::move(a), std::move(v), [in](const Tensor& g, Node& pa) {
      Tensor ga = g;
      for (size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] *= std::cos(in->val.data[i]);
      accumulate(pa, ga);
    });
  }

  // Exact GELU: x * Phi(x).
  NodePtr gelu(NodePtr a) {
    Tensor v = a->val;
    for (double& x : v.data)
      x = 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
    NodePtr in = a;
    return unary(std::move(a), std::move(v), [in](const Tensor& g, Node& pa) {
      Tensor ga = g;
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (size_t i = 0; i < ga.data.size(); ++i) {
        const double x = in->val.data[i];
        const double phi = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
        ga.data[i] *= phi + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      }
      accumulate(pa, ga);
    });
  }

  NodePtr silu(NodePtr a) {
    Tensor v = a->val;
    for (double& x : v.data) x = x / (1.0 + std::exp(-x));
    NodePtr in = a;
    return unary(std::move(a), std::move(v), [in](const Tensor& g, Node& pa) {
      Tensor ga = g;
      for (size_t i = 0; i < ga.data.size(); ++i) {
        const double x = in->val.data[i];
        const double s = 1.0 / (1.0 + std::exp(-x));
        ga.data[i] *= s * (1.0 + x * (1.0 - s));
      }
      accumulate(pa, ga);
    });
  }

  NodePtr slice_cols(NodePtr a, int64_t c0, int64_t len) {
    const int64_t r = a->val.rows(), c = a->val.cols();
    require(c0 >= 0 && c0 + len <= c, "slice_cols: out of range");
    Tensor v({r, len});
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < len; ++j) v.at(i, j) = a->val.at(i, c0 + j);
    return unary(std::move(a), std::move(v),
                 [c0, len](const Tensor& g, Node& pa) {
                   Tensor ga(pa.val.shape);
                   for (int64_t i = 0; i < g.rows(); ++i)
                     for (int64_t j = 0; j < len; ++j)
                       ga.at(i, c0 + j) = g.at(i, j);
                   accumulate(pa, ga);
                 });
  }

  NodePtr slice_rows(NodePtr a, int64_t r0, int64_t len) {
    const int64_t r = a->val.rows(), c = a->val.cols();
    require(r0 >= 0 && r0 + len <= r, "slice_rows: out of range");
    Tensor v({len, c});
    std::copy(a->val.data.begin() + r0 * c, a->val.data.begin() + (r0 + len) * c,
              v.data.begin());
    return unary(std::move(a), std::move(v),
                 [r0, len, c](const Tensor& g, Node& pa) {
                   Tensor ga(pa.val.shape);
                   std::copy(g.data.begin(), g.data.end(),
                             ga.data.begin() + r0 * c);
                   accumulate(pa, ga);
                 });
  }

  NodePtr concat_rows(const std::vector<NodePtr>& parts) {
    require(!parts.empty(), "concat_rows: empty");
    const int64_t c = parts[0]->val.cols();
    int64_t r = 0;
    for (const auto& p : parts) {
      require(p->val.cols() == c, "concat_rows: col mismatch");
      r += p->val.rows();
    }
    Tensor v({r, c});
    int64_t row = 0;
    std::vector<int64_t> offsets;
    for (const auto& p : parts) {
      offsets.push_back(row);
      std::copy(p->val.data.begin(), p->val.data.end(),
                v.data.begin() + row * c);
      row += p->val.rows();
    }
    return nary(parts, std::move(v),
                [offsets, c](const Tensor& g, std::vector<NodePtr>& ps) {
                  for (size_t k = 0; k < ps.size(); ++k) {
                    Tensor gk(ps[k]->val.shape);
                    std::copy(g.data.begin() + offsets[k] * c,
                              g.data.begin() +
                                  (offsets[k] + ps[k]->val.rows()) * c,
                              gk.data.begin());
                    accumulate(*ps[k], gk);
                  }
                });
  }

  NodePtr concat_cols(const std::vector<NodePtr>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    const int64_t r = parts[0]->val.rows();
    int64_t c = 0;
    for (const auto& p : parts) {
      require(p->val.rows() == r, "concat_cols: row mismatch");
      c += p->val.cols();
    }
    Tensor v({r, c});
    std::vector<int64_t> offsets;
    int64_t col = 0;
    for (const auto& p : parts) {
      offsets.push_back(col);
      const int64_t pc = p->val.cols();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < pc; ++j) v.at(i, col + j) = p->val.at(i, j);
      col += pc;
    }
    return nary(parts, std::move(v),
                [offsets](const Tensor& g, std::vector<NodePtr>& ps) {
                  for (size_t k = 0; k < ps.size(); ++k) {
                    const int64_t pc = ps[k]->val.cols();
                    Tensor gk(ps[k]->val.shape);
                    for (int64_t i = 0; i < g.rows(); ++i)
                      for (int64_t j = 0; j < pc; ++j)
                        gk.at(i, j) = g.at(i, offsets[k] + j);
                    accumulate(*ps[k], gk);
                  }
                });
  }

  NodePtr sum(NodePtr a) {
    Tensor v({1, 1});
    v.data[0] = sum_all(a->val);
    return unary(std::move(a), std::move(v), [](const Tensor& g, Node& pa) {
      accumulate(pa, Tensor::full(pa.val.shape, g.data[0]));
    });
  }

  NodePtr mean(NodePtr a) { return scale(sum(a), 1.0 / double(a->val.numel())); }

  // Area-mean downsample of an {H*W, C} grid by an integer factor.
  NodePtr avgpool_grid(NodePtr a, int64_t H, int64_t W, int64_t f) {
    require(H % f == 0 && W % f == 0, "avgpool_grid: dims not divisible");
    const int64_t C = a->val.cols(), h = H / f, w = W / f;
    require(a->val.rows() == H * W, "avgpool_grid: row count mismatch");
    Tensor v({h * w, C});
    const double inv = 1.0 / double(f * f);
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t dy = 0; dy < f; ++dy)
          for (int64_t dx = 0; dx < f; ++dx) {
            const int64_t src = (y * f + dy) * W + (x * f + dx);
            for (int64_t ch = 0; ch < C; ++ch)
              v.at(y * w + x, ch) += a->val.at(src, ch) * inv;
          }
    return unary(std::move(a), std::move(v),
                 [H, W, f, C](const Tensor& g, Node& pa) {
                   Tensor ga(pa.val.shape);
                   const int64_t w2 = W / f;
                   const double inv2 = 1.0 / double(f * f);
                   for (int64_t y = 0; y < H; ++y)
                     for (int64_t x = 0; x < W; ++x) {
                       const int64_t dst = (y / f) * w2 + (x / f);
                       for (int64_t ch = 0; ch < C; ++ch)
                         ga.at(y * W + x, ch) = g.at(dst, ch) * inv2;
                     }
                   accumulate(pa, ga);
                 });
  }

  // {h*w, C} -> {(h/p)*(w/p), C*p*p}; patches row-major, pixels row-major
  // within a patch, channels innermost.
  NodePtr patchify_grid(NodePtr a, int64_t h, int64_t w, int64_t p) {
    require(h % p == 0 && w % p == 0, "patchify: dims not divisible by patch");
    const int64_t C = a->val.cols();
    require(a->val.rows() == h * w, "patchify: row count mismatch");
    const int64_t gh = h / p, gw = w / p;
    Tensor v({gh * gw, C * p * p});
    for (int64_t py = 0; py < gh; ++py)
      for (int64_t px = 0; px < gw; ++px)
        for (int64_t dy = 0; dy < p; ++dy)
          for (int64_t dx = 0; dx < p; ++dx)
            for (int64_t ch = 0; ch < C; ++ch)
              v.at(py * gw + px, (dy * p + dx) * C + ch) =
                  a->val.at((py * p + dy) * w + (px * p + dx), ch);
    return unary(std::move(a), std::move(v),
                 [h, w, p, C](const Tensor& g, Node& pa) {
                   Tensor ga(pa.val.shape);
                   const int64_t gw2 = w / p;
                   for (int64_t y = 0; y < h; ++y)
                     for (int64_t x = 0; x < w; ++x)
                       for (int64_t ch = 0; ch < C; ++ch)
                         ga.at(y * w + x, ch) =
                             g.at((y / p) * gw2 + (x / p),
                                  ((y % p) * p + (x % p)) * C + ch);
                   accumulate(pa, ga);
                 });
  }

  // Inverse of patchify_grid: {n, C*p*p} -> {h*w, C}.
  NodePtr unpatchify_grid(NodePtr a, int64_t h, int64_t w, int64_t p) {
    require(h % p == 0 && w % p == 0, "unpatchify: dims not divisible");
    const int64_t n = a->val.rows(), raw = a->val.cols();
    require(raw % (p * p) == 0, "unpatchify: raw dim not divisible");
    const int64_t C = raw / (p * p);
    require(n == (h / p) * (w / p), "unpatchify: token count mismatch");
    const int64_t gw = w / p;
    Tensor v({h * w, C});
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t ch = 0; ch < C; ++ch)
          v.at(y * w + x, ch) = a->val.at((y / p) * gw + (x / p),
                                          ((y % p) * p + (x % p)) * C + ch);
    return unary(std::move(a), std::move(v),
                 [h, w, p, C, gw](const Tensor& g, Node& pa) {
                   Tensor ga(pa.val.shape);
                   for (int64_t y = 0; y < h; ++y)
                     for (int64_t x = 0; x < w; ++x)
                       for (int64_t ch = 0; ch < C; ++ch)
                         ga.at((y / p) * gw + (x / p),
                               ((y % p) * p + (x % p)) * C + ch) =
                             g.at(y * w + x, ch);
                   accumulate(pa, ga);
                 });
  }

 private:
  static Tensor resize_like(const Tensor& small, const Tensor& big) {
    if (small.shape == big.shape) return small;
    Tensor out(big.shape);
    const int64_t r = big.rows(), c = big.cols();
    if (small.numel() == 1) {
      std::fill(out.data.begin(), out.data.end(), small.data[0]);
    } else if (small.rows() == 1) {
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(i, j) = small.data[size_t(j)];
    } else {
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(i, j) = small.data[size_t(i)];
    }
    return out;
  }

  NodePtr register_node(NodePtr n, std::vector<NodePtr> parents) {
    bool needs = false;
    for (const auto& p : parents) needs |= p->requires_grad;
    if (!grad_enabled_ || !needs) {
      n->requires_grad = false;
      n->backprop = nullptr;
      return n;  // not retained: frees once consumers release it
    }
    n->requires_grad = true;
    n->parents = std::move(parents);
    order_.push_back(n);
    return n;
  }

  template <class Fwd, class Bwd>
  NodePtr binary(NodePtr a, NodePtr b, Fwd fwd, Bwd bwd) {
    Tensor v = fwd(a->val, b->val);
    return binary_v(std::move(a), std::move(b), std::move(v), bwd);
  }

  template <class Bwd>
  NodePtr binary_v(NodePtr a, NodePtr b, Tensor v, Bwd bwd) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    NodePtr out = register_node(n, {a, b});
    if (out->requires_grad)
      out->backprop = [bwd](Node& node) {
        bwd(node.grad, node, *node.parents[0], *node.parents[1]);
      };
    return out;
  }

  template <class Bwd>
  NodePtr unary(NodePtr a, Tensor v, Bwd bwd) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    NodePtr out = register_node(n, {a});
    if (out->requires_grad)
      out->backprop = [bwd](Node& node) { bwd(node.grad, *node.parents[0]); };
    return out;
  }

  NodePtr unary_keep_val(NodePtr a, Tensor v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    return register_node(n, {a});
  }

  template <class Bwd>
  NodePtr nary(const std::vector<NodePtr>& parts, Tensor v, Bwd bwd) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    NodePtr out = register_node(n, parts);
    if (out->requires_grad)
      out->backprop = [bwd](Node& node) { bwd(node.grad, node.parents); };
    return out;
  }

  bool grad_enabled_;
  std::vector<NodePtr> order_;
  std::vector<std::pair<Tensor*, NodePtr>> params_;
  std::unordered_map<const Tensor*, NodePtr> param_map_;
};

}  // namespace mvdiff::ad
