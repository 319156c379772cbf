#include <gtest/gtest.h>

#include <functional>

#include "mvdiff/autodiff.hpp"
#include "oracles.hpp"

using namespace mvdiff;

namespace {

// Generic gradient check: builds the graph twice (once for analytic
// gradients, once per finite-difference probe) and compares.
void check_op(
    std::vector<Tensor> inputs,
    const std::function<ad::NodePtr(ad::Graph&, std::vector<ad::NodePtr>&)>&
        build,
    double tol = 1e-6) {
  auto run = [&](bool with_grad, std::vector<Tensor>* grads_out) -> double {
    ad::Graph g(with_grad);
    std::vector<ad::NodePtr> nodes;
    for (auto& t : inputs) nodes.push_back(g.param(t));
    auto out = build(g, nodes);
    // deterministic random weighting to a scalar
    Rng r(555);
    Tensor w = Tensor::randn(out->val.shape, r);
    auto loss = g.sum(g.mul(out, g.constant(w)));
    if (with_grad) {
      g.backward(loss);
      for (auto& n : nodes) {
        EXPECT_FALSE(n->grad.data.empty());
        grads_out->push_back(n->grad.data.empty() ? Tensor(n->val.shape)
                                                  : n->grad);
      }
    }
    return loss->val.data[0];
  };

  std::vector<Tensor> analytic;
  run(true, &analytic);
  ASSERT_EQ(analytic.size(), inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor fd = oracles::finite_diff(
        inputs[i], [&]() { return run(false, nullptr); });
    EXPECT_LT(oracles::rel_error(analytic[i], fd), tol) << "input " << i;
  }
}

Tensor rnd(std::vector<int64_t> shape, uint64_t seed) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng);
}

}  // namespace

TEST(Autodiff, AddSameShape) {
  check_op({rnd({3, 4}, 1), rnd({3, 4}, 2)},
           [](ad::Graph& g, auto& n) { return g.add(n[0], n[1]); });
}

TEST(Autodiff, AddRowBroadcast) {
  check_op({rnd({3, 4}, 3), rnd({1, 4}, 4)},
           [](ad::Graph& g, auto& n) { return g.add(n[0], n[1]); });
}

TEST(Autodiff, SubColBroadcast) {
  check_op({rnd({3, 4}, 5), rnd({3, 1}, 6)},
           [](ad::Graph& g, auto& n) { return g.sub(n[0], n[1]); });
}

TEST(Autodiff, MulSameShape) {
  check_op({rnd({2, 5}, 7), rnd({2, 5}, 8)},
           [](ad::Graph& g, auto& n) { return g.mul(n[0], n[1]); });
}

TEST(Autodiff, MulRowBroadcast) {
  check_op({rnd({4, 3}, 9), rnd({1, 3}, 10)},
           [](ad::Graph& g, auto& n) { return g.mul(n[0], n[1]); });
}

TEST(Autodiff, MulColBroadcast) {
  check_op({rnd({4, 3}, 11), rnd({4, 1}, 12)},
           [](ad::Graph& g, auto& n) { return g.mul(n[0], n[1]); });
}

TEST(Autodiff, MulSelfSquares) {
  check_op({rnd({3, 3}, 13)},
           [](ad::Graph& g, auto& n) { return g.mul(n[0], n[0]); });
}

TEST(Autodiff, ScaleAndAddScalar) {
  check_op({rnd({2, 6}, 14)}, [](ad::Graph& g, auto& n) {
    return g.add_scalar(g.scale(n[0], -2.5), 0.75);
  });
}

TEST(Autodiff, Matmul) {
  check_op({rnd({3, 4}, 15), rnd({4, 5}, 16)},
           [](ad::Graph& g, auto& n) { return g.matmul(n[0], n[1]); });
}

TEST(Autodiff, MatmulNt) {
  check_op({rnd({3, 4}, 17), rnd({6, 4}, 18)},
           [](ad::Graph& g, auto& n) { return g.matmul_nt(n[0], n[1]); });
}

TEST(Autodiff, LayerNorm) {
  check_op({rnd({4, 8}, 19)},
           [](ad::Graph& g, auto& n) { return g.layernorm(n[0]); }, 1e-5);
}

TEST(Autodiff, SoftmaxRows) {
  check_op({rnd({5, 7}, 20)},
           [](ad::Graph& g, auto& n) { return g.softmax_rows(n[0]); }, 1e-5);
}

TEST(Autodiff, Sin) {
  check_op({rnd({3, 5}, 21)},
           [](ad::Graph& g, auto& n) { return g.sin(n[0]); });
}

TEST(Autodiff, Gelu) {
  check_op({rnd({3, 5}, 22)},
           [](ad::Graph& g, auto& n) { return g.gelu(n[0]); }, 1e-5);
}

TEST(Autodiff, Silu) {
  check_op({rnd({3, 5}, 23)},
           [](ad::Graph& g, auto& n) { return g.silu(n[0]); }, 1e-5);
}

TEST(Autodiff, Slices) {
  check_op({rnd({6, 8}, 24)}, [](ad::Graph& g, auto& n) {
    return g.slice_rows(g.slice_cols(n[0], 2, 4), 1, 3);
  });
}

TEST(Autodiff, Concats) {
  check_op({rnd({2, 3}, 25), rnd({4, 3}, 26), rnd({2, 5}, 27)},
           [](ad::Graph& g, auto& n) {
             auto rows = g.concat_rows({n[0], n[1]});  // {6,3}
             auto cols = g.concat_cols({g.slice_rows(rows, 0, 2), n[2]});
             return cols;  // {2,8}
           });
}

TEST(Autodiff, AvgPool) {
  check_op({rnd({16, 3}, 28)}, [](ad::Graph& g, auto& n) {
    return g.avgpool_grid(n[0], 4, 4, 2);
  });
}

TEST(Autodiff, PatchifyUnpatchifyInverse) {
  // round trip is the identity, and gradients flow through both
  Tensor x = rnd({16, 3}, 29);
  ad::Graph g;
  auto n = g.param(x);
  auto tok = g.patchify_grid(n, 4, 4, 2);
  EXPECT_EQ(tok->val.rows(), 4);
  EXPECT_EQ(tok->val.cols(), 12);
  auto back = g.unpatchify_grid(tok, 4, 4, 2);
  EXPECT_TRUE(bit_equal(back->val, x));
  check_op({rnd({16, 3}, 30)}, [](ad::Graph& g2, auto& nn) {
    return g2.unpatchify_grid(g2.patchify_grid(nn[0], 4, 4, 2), 4, 4, 2);
  });
}

TEST(Autodiff, PatchifyTokenZeroIsTopLeftPatchRowMajor) {
  // {h,w,c} = {4,4,2}: token 0 = pixels (0,0),(0,1),(1,0),(1,1), channels
  // innermost
  Tensor x({16, 2});
  for (int64_t i = 0; i < 16; ++i)
    for (int64_t c = 0; c < 2; ++c) x.at(i, c) = double(i * 10 + c);
  ad::Graph g(false);
  auto tok = g.patchify_grid(g.constant(x), 4, 4, 2);
  const std::vector<double> expected = {0,  1,  10, 11,
                                        40, 41, 50, 51};  // pixels 0,1,4,5
  for (size_t i = 0; i < expected.size(); ++i)
    EXPECT_DOUBLE_EQ(tok->val.at(0, int64_t(i)), expected[i]);
}

TEST(Autodiff, ParamDeduplication) {
  Tensor x = rnd({2, 2}, 31);
  ad::Graph g;
  auto a = g.param(x);
  auto b = g.param(x);
  EXPECT_EQ(a.get(), b.get());
  auto loss = g.sum(g.add(a, b));  // d loss / dx = 2
  g.backward(loss);
  for (double v : a->grad.data) EXPECT_DOUBLE_EQ(v, 2.0);
}

TEST(Autodiff, NoGradModeSkipsTape) {
  Tensor x = rnd({2, 2}, 32);
  ad::Graph g(false);
  auto n = g.param(x);
  auto out = g.sum(g.mul(n, n));
  EXPECT_FALSE(out->requires_grad);
  EXPECT_THROW(g.backward(out), Error);
}

TEST(Autodiff, MeanMatchesManual) {
  Tensor x = rnd({3, 4}, 33);
  ad::Graph g;
  auto m = g.mean(g.param(x));
  EXPECT_NEAR(m->val.data[0], sum_all(x) / 12.0, 1e-14);
}
