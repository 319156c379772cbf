#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mvdiff/error.hpp"
#include "mvdiff/tensor.hpp"

namespace mvdiff {

// Discrete DDPM forward-process table: alpha_bar[t] for t in [0, T] with
// alpha_bar[0] == 1 and a strictly decreasing tail.
struct DiffusionSchedule {
  int T = 1000;
  double beta_start = 1e-4, beta_end = 0.02;
  std::vector<double> alpha_bar;  // size T+1

  double sqrt_ab(int t) const { return std::sqrt(alpha_bar[size_t(t)]); }
  double sqrt_one_minus_ab(int t) const {
    return std::sqrt(1.0 - alpha_bar[size_t(t)]);
  }
};

inline DiffusionSchedule make_schedule(int T = 1000, double beta_start = 1e-4,
                                       double beta_end = 0.02) {
  require(T >= 1, "make_schedule: T must be >= 1");
  require(beta_start > 0 && beta_start < beta_end && beta_end < 1,
          "make_schedule: need 0 < beta_start < beta_end < 1");
  DiffusionSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.alpha_bar.assign(size_t(T) + 1, 1.0);
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double beta =
        T == 1 ? beta_start
               : beta_start + (beta_end - beta_start) * double(t - 1) /
                                  double(T - 1);
    prod *= 1.0 - beta;
    s.alpha_bar[size_t(t)] = prod;
  }
  require(s.alpha_bar[size_t(T)] > 0, "make_schedule: alpha_bar underflow");
  return s;
}

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
inline Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps,
                            const DiffusionSchedule& sched) {
  require(t >= 0 && t <= sched.T, "forward_noise: t out of range");
  require(z0.shape == eps.shape, "forward_noise: shape mismatch");
  Tensor z = z0;
  const double a = sched.sqrt_ab(t), b = sched.sqrt_one_minus_ab(t);
  for (size_t i = 0; i < z.data.size(); ++i)
    z.data[i] = a * z0.data[i] + b * eps.data[i];
  return z;
}

// Uncertainty of estimating a constant image of n pixels corrupted to step
// t: sigma = sqrt(1-abar)/sqrt(abar) / sqrt(n). t = 0 is the zero limit.
inline double uncertainty(int t, int64_t n, const DiffusionSchedule& sched) {
  require(t >= 0 && t <= sched.T, "uncertainty: t out of range");
  require(n >= 1, "uncertainty: n must be >= 1");
  if (t == 0) return 0.0;
  const double ab = sched.alpha_bar[size_t(t)];
  return std::sqrt(1.0 - ab) / std::sqrt(ab) / std::sqrt(double(n));
}

// Resolution-dependent alpha remapping: the abar at pixel-count ratio
// r = m/n that keeps the constant-image uncertainty unchanged.
inline double rescale_alpha(double alpha_n, double ratio) {
  require(alpha_n > 0 && alpha_n <= 1, "rescale_alpha: alpha out of (0,1]");
  require(ratio > 0, "rescale_alpha: ratio must be positive");
  return alpha_n / (ratio + alpha_n * (1.0 - ratio));
}

// Maps a discrete timestep across resolutions: computes the target abar via
// rescale_alpha (after scaling the ratio by effective_ratio_multiplier) and
// returns the step whose abar is nearest, ties to the smaller t.
inline int rescale_timestep(int t_n, double ratio,
                            const DiffusionSchedule& sched,
                            double effective_ratio_multiplier = 0.9) {
  require(t_n >= 1 && t_n <= sched.T, "rescale_timestep: t out of range");
  require(ratio > 0 && effective_ratio_multiplier > 0,
          "rescale_timestep: bad ratio");
  const double target =
      rescale_alpha(sched.alpha_bar[size_t(t_n)], ratio * effective_ratio_multiplier);
  int best = 0;
  double best_dist = std::abs(sched.alpha_bar[0] - target);
  for (int t = 1; t <= sched.T; ++t) {
    const double d = std::abs(sched.alpha_bar[size_t(t)] - target);
    if (d < best_dist) {  // strict: ties keep the smaller t
      best_dist = d;
      best = t;
    }
  }
  return best;
}

}  // namespace mvdiff
