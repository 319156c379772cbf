#pragma once

#include <cmath>

#include "mvdiff/rng.hpp"
#include "mvdiff/tensor.hpp"

namespace mvdiff {

enum class CfgMode { constant, bump };

struct CfgPolicy {
  double base_scale = 7.0;
  double peak_scale = 15.0;
  CfgMode mode = CfgMode::constant;
};

inline void validate_cfg_policy(const CfgPolicy& p) {
  require(p.peak_scale >= p.base_scale && p.base_scale >= 0,
          "cfg policy: need peak >= base >= 0");
}

// eps_u + scale * (eps_c - eps_u); the scale==1 and scale==0 cases return
// the corresponding input unchanged so trajectories match bit-for-bit.
inline Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond,
                          double scale) {
  require(eps_uncond.shape == eps_cond.shape, "cfg_combine: shape mismatch");
  if (scale == 1.0) return eps_cond;
  if (scale == 0.0) return eps_uncond;
  Tensor out = eps_uncond;
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] += scale * (eps_cond.data[i] - eps_uncond.data[i]);
  return out;
}

// Bump schedule over azimuth relative to the frontal view: linear
// base->peak on [0,90], flat peak on [90,270], linear peak->base on
// [270,360). Constant mode always returns the base scale.
inline double bump_cfg_scale(double azimuth_deg, const CfgPolicy& policy) {
  validate_cfg_policy(policy);
  if (policy.mode == CfgMode::constant) return policy.base_scale;
  double a = std::fmod(azimuth_deg, 360.0);
  if (a < 0) a += 360.0;
  const double base = policy.base_scale, peak = policy.peak_scale;
  if (a <= 90.0) return base + (peak - base) * (a / 90.0);
  if (a <= 270.0) return peak;
  return peak + (base - peak) * ((a - 270.0) / 90.0);
}

// Training-time condition dropout: true means the reference conditioning is
// replaced by the learned null embedding for this sample.
inline bool condition_dropout(double p, Rng& rng) {
  require(p >= 0.0 && p <= 1.0, "condition_dropout: p out of [0,1]");
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return rng.bernoulli(p);
}

}  // namespace mvdiff
