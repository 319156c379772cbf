#pragma once

#include <functional>
#include <vector>

#include "mvdiff/guidance.hpp"
#include "mvdiff/rng.hpp"
#include "mvdiff/schedule.hpp"

namespace mvdiff {

// Joint denoiser over a set of view latents: (z_t per view, t, uncond) ->
// epsilon prediction per view.
using MultiViewDenoiser = std::function<std::vector<Tensor>(
    const std::vector<Tensor>&, int, bool)>;

namespace detail {

// Descending timestep grid T = t_0 > t_1 > ... > t_steps = 0, evenly spaced.
inline std::vector<int> ddim_timesteps(int T, int steps) {
  std::vector<int> ts(size_t(steps) + 1);
  for (int i = 0; i <= steps; ++i)
    ts[size_t(i)] = int(std::llround(double(T) * double(steps - i) / steps));
  return ts;
}

}  // namespace detail

// Deterministic (eta = 0) DDIM over an evenly spaced step subset. Starts
// from seeded standard-normal latents; at every step runs the conditional
// pass, the unconditional pass when guidance needs it, and combines with a
// per-view bump CFG scale derived from the view azimuths.
inline std::vector<Tensor> ddim_sample(
    const MultiViewDenoiser& denoiser, int n_views,
    const std::vector<int64_t>& latent_shape, const DiffusionSchedule& sched,
    int steps, const CfgPolicy& policy, const std::vector<double>& azimuths_deg,
    uint64_t rng_seed, bool force_uncond_pass = false) {
  require(steps >= 1 && steps <= sched.T, "ddim_sample: bad step count");
  require(azimuths_deg.empty() || int(azimuths_deg.size()) == n_views,
          "ddim_sample: azimuth count mismatch");

  std::vector<double> scales(size_t(n_views), policy.base_scale);
  for (int v = 0; v < n_views; ++v)
    scales[size_t(v)] = bump_cfg_scale(
        azimuths_deg.empty() ? 0.0 : azimuths_deg[size_t(v)], policy);
  bool need_uncond = force_uncond_pass;
  for (double s : scales) need_uncond |= (s != 1.0);

  Rng rng(mix_seed(rng_seed, 0x6464696dull));  // "ddim"
  std::vector<Tensor> z;
  z.resize(size_t(n_views));
  for (auto& zi : z) zi = Tensor::randn(latent_shape, rng);

  const auto ts = detail::ddim_timesteps(sched.T, steps);
  for (size_t k = 0; k + 1 < ts.size(); ++k) {
    const int t = ts[k], t_next = ts[k + 1];
    const auto eps_c = denoiser(z, t, false);
    require(int(eps_c.size()) == n_views, "ddim_sample: denoiser view count");
    std::vector<Tensor> eps_u;
    if (need_uncond) eps_u = denoiser(z, t, true);

    const double sa = sched.sqrt_ab(t), sb = sched.sqrt_one_minus_ab(t);
    const double na = sched.sqrt_ab(t_next), nb = sched.sqrt_one_minus_ab(t_next);
    for (int v = 0; v < n_views; ++v) {
      require(eps_c[size_t(v)].shape == z[size_t(v)].shape,
              "ddim_sample: denoiser output shape mismatch");
      const Tensor eps_hat =
          need_uncond ? cfg_combine(eps_u[size_t(v)], eps_c[size_t(v)],
                                    scales[size_t(v)])
                      : eps_c[size_t(v)];
      Tensor& zi = z[size_t(v)];
      for (size_t i = 0; i < zi.data.size(); ++i) {
        const double x0 = (zi.data[i] - sb * eps_hat.data[i]) / sa;
        zi.data[i] = na * x0 + nb * eps_hat.data[i];
      }
    }
  }
  return z;
}

// Monte-Carlo denoising objective: per item draws t ~ U[1, T] and unit
// Gaussian noise, and returns the mean squared error per element between
// the drawn noise and the denoiser's prediction. Target tokens only by
// construction: the denoiser argument predicts for the latents it is given.
inline double training_loss(
    const std::function<Tensor(const Tensor&, int)>& denoiser,
    const std::vector<Tensor>& z0_batch, const DiffusionSchedule& sched,
    Rng& rng) {
  require(!z0_batch.empty(), "training_loss: empty batch");
  double total_sq = 0.0;
  int64_t total_elems = 0;
  for (const auto& z0 : z0_batch) {
    const int t = int(rng.uniform_int(1, sched.T));
    const Tensor eps = Tensor::randn(z0.shape, rng);
    const Tensor z_t = forward_noise(z0, t, eps, sched);
    const Tensor pred = denoiser(z_t, t);
    require(pred.shape == z0.shape, "training_loss: prediction shape");
    for (size_t i = 0; i < eps.data.size(); ++i) {
      const double d = eps.data[i] - pred.data[i];
      total_sq += d * d;
    }
    total_elems += eps.numel();
  }
  return total_sq / double(total_elems);
}

}  // namespace mvdiff
