#pragma once

#include "mvdiff/autodiff.hpp"
#include "mvdiff/nn.hpp"
#include "mvdiff/plucker.hpp"

namespace mvdiff {

// Periodic first layer: sin(omega0 * (x W + b)). The weight range follows
// the first-layer scheme of the cited work, uniform in +-1/in before the
// omega0 factor, which amplifies the tiny per-pixel differences of Plücker
// grids into usable features.
struct SirenLayer {
  Tensor W, b;
  double omega0 = 30.0;

  SirenLayer() = default;
  SirenLayer(int64_t in, int64_t out, double omega, Rng& rng) : omega0(omega) {
    W = Tensor::uniform({in, out}, -1.0 / double(in), 1.0 / double(in), rng);
    b = Tensor({1, out});
    quantize_f32(W);
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) {
    reg.add(prefix + ".W", W);
    reg.add(prefix + ".b", b);
  }

  ad::NodePtr preactivation(ad::Graph& g, ad::NodePtr x) {
    return g.scale(g.add(g.matmul(std::move(x), g.param(W)), g.param(b)),
                   omega0);
  }

  ad::NodePtr fwd(ad::Graph& g, ad::NodePtr x) {
    return g.sin(preactivation(g, std::move(x)));
  }
};

// Encodes a {H, W, 6} Plücker grid into a {H/f, W/f, out} feature grid:
// SIREN layer per pixel, then area-mean downsample by the codec factor.
inline Tensor siren_encode(const PluckerGrid& grid, SirenLayer& layer,
                           int downsample_factor) {
  ad::Graph g(/*grad_enabled=*/false);
  const int64_t H = grid.height, W = grid.width;
  auto x = g.constant(grid.data.reshaped({H * W, 6}));
  auto feat = layer.fwd(g, x);
  if (downsample_factor > 1)
    feat = g.avgpool_grid(feat, H, W, downsample_factor);
  const int64_t out = layer.W.cols();
  return feat->val.reshaped(
      {H / downsample_factor, W / downsample_factor, out});
}

}  // namespace mvdiff
