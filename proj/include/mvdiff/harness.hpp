#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <vector>

#include "mvdiff/checkpoint.hpp"
#include "mvdiff/ddim.hpp"
#include "mvdiff/image.hpp"
#include "mvdiff/model.hpp"
#include "mvdiff/optim.hpp"
#include "mvdiff/scene.hpp"

namespace mvdiff {

// Azimuth of a target camera relative to the anchor's forward axis,
// measured in the anchor's horizontal plane; 0 degrees is the frontal view
// (camera looking straight down the anchor's gaze).
inline double view_azimuth_deg(const CameraParams& cam,
                               const SpatialAnchor& anchor) {
  const Eigen::Vector3d up = anchor.up();
  auto flatten = [&](const Eigen::Vector3d& v) {
    const Eigen::Vector3d f = v - up * up.dot(v);
    return f.norm() > 1e-12 ? Eigen::Vector3d(f.normalized()) : v;
  };
  const Eigen::Vector3d fwd = flatten(anchor.forward());
  const Eigen::Vector3d toward = flatten(-cam.optical_axis());
  const double cosv = std::clamp(fwd.dot(toward), -1.0, 1.0);
  const double sinv = up.dot(fwd.cross(toward));
  double deg = std::atan2(sinv, cosv) * 180.0 / std::numbers::pi;
  if (deg < 0) deg += 360.0;
  return deg;
}

// One view of a scene with every conditioning input the model may need.
struct ViewData {
  CameraParams cam;
  int view_id = 0;
  Tensor latent;         // GT latent {h, w, C}
  PluckerGrid plucker;   // full resolution
  Tensor anchor_latent;  // {h, w, C}
  double azimuth_deg = 0;
};

struct PreparedScene {
  ToyScene scene;
  LatentCodec codec;
  std::vector<ViewData> views;
  int latent_h = 0, latent_w = 0;

  std::vector<int64_t> latent_shape() const {
    return {latent_h, latent_w, 3};
  }
};

inline PreparedScene prepare_scene(const ToyScene& scene,
                                   const ModelConfig& cfg,
                                   double anchor_axis_len = 0.35) {
  PreparedScene ps;
  ps.scene = scene;
  ps.codec.factor = cfg.latent_downsample;
  const int res = scene.resolution;
  require(res % cfg.latent_downsample == 0,
          "prepare_scene: resolution not divisible by latent factor");
  ps.latent_h = res / cfg.latent_downsample;
  ps.latent_w = res / cfg.latent_downsample;
  require(ps.latent_h % cfg.patch == 0,
          "prepare_scene: latent size not divisible by patch");
  for (size_t v = 0; v < scene.cameras.size(); ++v) {
    ViewData vd;
    vd.cam = scene.cameras[v];
    vd.view_id = int(v);
    vd.latent = ps.codec.encode(scene.view_image(int(v)));
    vd.plucker = plucker_grid(vd.cam, res, res);
    const AnchorImage ai =
        render_anchor_image(scene.anchor, vd.cam, res, res, anchor_axis_len);
    vd.anchor_latent = ps.codec.encode(ai.pixels);
    vd.azimuth_deg = view_azimuth_deg(vd.cam, scene.anchor);
    ps.views.push_back(std::move(vd));
  }
  return ps;
}

inline ViewConditioning conditioning_for(const ViewData& vd) {
  ViewConditioning vc;
  vc.cam = vd.cam;
  vc.view_id = vd.view_id;
  vc.plucker = vd.plucker;
  vc.anchor_latent = vd.anchor_latent;
  return vc;
}

// Wraps the model as a joint denoiser over a fixed set of target views.
inline MultiViewDenoiser model_denoiser(MvDit& model, const PreparedScene& ps,
                                        const std::vector<int>& target_views,
                                        int ref_view, double lambda = 0.0,
                                        EntropyRecorder* probe = nullptr) {
  return [&model, &ps, target_views, ref_view, lambda, probe](
             const std::vector<Tensor>& z, int t,
             bool uncond) -> std::vector<Tensor> {
    ad::Graph g(/*grad_enabled=*/false);
    ForwardInputs in;
    in.noisy_targets = z;
    for (int v : target_views)
      in.views.push_back(conditioning_for(ps.views[size_t(v)]));
    if (ref_view >= 0) in.ref_latent = ps.views[size_t(ref_view)].latent;
    in.t = t;
    in.lambda = lambda;
    in.uncond = uncond;
    const ForwardResult res = model.forward(g, in, probe);
    std::vector<Tensor> eps;
    for (const auto& node : res.eps_views)
      eps.push_back(node->val.reshaped(ps.latent_shape()));
    return eps;
  };
}

struct SampleViewsConfig {
  std::vector<int> view_indices;
  int ref_view = 0;
  int ddim_steps = 50;
  CfgPolicy cfg;       // base_scale 1.0 => conditional-only sampling
  double gamma = 0.0;  // > 0 enables attention biasing via Eq. 6
  uint64_t seed = 0;
  bool force_uncond_pass = false;
};

struct SampleViewsResult {
  std::vector<Tensor> images;  // decoded {H, W, 3}
  std::vector<Tensor> latents;
  std::vector<double> azimuths;
  double lambda = 0.0;
  int64_t n_tokens = 0;
};

// Joint DDIM sampling of a set of scene views with per-view bump CFG and
// optional entropy-controlled attention biasing.
inline SampleViewsResult sample_scene_views(MvDit& model,
                                            const PreparedScene& ps,
                                            const SampleViewsConfig& cfg,
                                            const DiffusionSchedule& sched,
                                            EntropyRecorder* probe = nullptr) {
  require(!cfg.view_indices.empty(), "sample: no views requested");
  const int64_t tpv = (int64_t(ps.latent_h) / model.cfg.patch) *
                      (int64_t(ps.latent_w) / model.cfg.patch);
  const int64_t n_tokens =
      tpv * int64_t(cfg.view_indices.size()) + (cfg.ref_view >= 0 ? tpv : 0);

  double lambda = 0.0;
  if (cfg.gamma > 0.0) {
    require(model.cfg.n_train_tokens > 0,
            "sample: checkpoint lacks the training token count needed for "
            "attention biasing");
    AttentionBiasConfig bias;
    bias.d = model.cfg.head_dim();
    bias.N_train = model.cfg.n_train_tokens;
    bias.gamma = cfg.gamma;
    lambda = biased_lambda(bias, n_tokens);
  }

  SampleViewsResult out;
  out.n_tokens = n_tokens;
  out.lambda = lambda > 0 ? lambda : model.cfg.default_lambda();
  for (int v : cfg.view_indices)
    out.azimuths.push_back(ps.views[size_t(v)].azimuth_deg);

  auto denoiser =
      model_denoiser(model, ps, cfg.view_indices, cfg.ref_view, lambda, probe);
  out.latents =
      ddim_sample(denoiser, int(cfg.view_indices.size()), ps.latent_shape(),
                  sched, cfg.ddim_steps, cfg.cfg, out.azimuths, cfg.seed,
                  cfg.force_uncond_pass);
  for (const auto& z : out.latents) out.images.push_back(ps.codec.decode(z));
  return out;
}

}  // namespace mvdiff
