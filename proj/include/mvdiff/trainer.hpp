#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <vector>

#include "mvdiff/guidance.hpp"
#include "mvdiff/harness.hpp"
#include "mvdiff/optim.hpp"

namespace mvdiff {

struct TrainConfig {
  int steps = 600;
  int n_target_views = 4;  // views denoised jointly per step
  int ref_view = 0;
  double dropout_p = 0.2;
  double ratio_multiplier = 0.9;  // effective-ratio factor for timestep rescaling
  OptimizerConfig opt;
  uint64_t seed = 0;
  bool fixed_batch = false;  // reuse the step-0 batch every step
  std::filesystem::path loss_csv;  // empty = no file
};

struct TrainBatch {
  int scene_index = 0;
  std::vector<int> target_views;
  int t = 1;
  std::vector<Tensor> eps;  // per target view
  bool drop_reference = false;
};

// Deterministic batch construction: every quantity is drawn from a stream
// seeded by (seed, step), so resuming a run reproduces the exact batches.
inline TrainBatch make_batch(const std::vector<PreparedScene>& scenes,
                             const DiffusionSchedule& sched,
                             const TrainConfig& cfg, int step) {
  Rng rng(mix_seed(cfg.seed, uint64_t(cfg.fixed_batch ? 0 : step)));
  TrainBatch batch;
  batch.scene_index = int(rng.uniform_int(0, int64_t(scenes.size()) - 1));
  const auto& ps = scenes[size_t(batch.scene_index)];

  std::vector<int> candidates;
  for (int v = 0; v < int(ps.views.size()); ++v)
    if (v != cfg.ref_view) candidates.push_back(v);
  require(int(candidates.size()) >= cfg.n_target_views,
          "train: not enough views for the requested batch size");
  for (size_t i = candidates.size(); i > 1; --i)
    std::swap(candidates[i - 1],
              candidates[size_t(rng.uniform_int(0, int64_t(i) - 1))]);
  batch.target_views.assign(candidates.begin(),
                            candidates.begin() + cfg.n_target_views);

  batch.t = int(rng.uniform_int(1, sched.T));
  for (int i = 0; i < cfg.n_target_views; ++i)
    batch.eps.push_back(Tensor::randn(ps.latent_shape(), rng));
  batch.drop_reference = condition_dropout(cfg.dropout_p, rng);
  return batch;
}

// One optimization step of the joint denoising objective: MSE between the
// drawn noise and the prediction, over target tokens only.
inline double train_step(MvDit& model, const std::vector<PreparedScene>& scenes,
                         const DiffusionSchedule& sched, const TrainConfig& cfg,
                         Optimizer& opt, int step) {
  const TrainBatch batch = make_batch(scenes, sched, cfg, step);
  const auto& ps = scenes[size_t(batch.scene_index)];

  // mixed-resolution scene sets: remap the drawn timestep so the
  // corruption level matches the base scene's pixel count
  int t = batch.t;
  const double base_px = double(scenes[0].latent_h) * scenes[0].latent_w;
  const double px = double(ps.latent_h) * ps.latent_w;
  if (px != base_px)
    t = rescale_timestep(batch.t, px / base_px, sched, cfg.ratio_multiplier);
  if (t < 1) t = 1;

  ad::Graph g;
  ForwardInputs in;
  for (size_t i = 0; i < batch.target_views.size(); ++i) {
    const int v = batch.target_views[i];
    in.noisy_targets.push_back(
        forward_noise(ps.views[size_t(v)].latent, t, batch.eps[i], sched));
    in.views.push_back(conditioning_for(ps.views[size_t(v)]));
  }
  in.ref_latent = ps.views[size_t(cfg.ref_view)].latent;
  in.t = t;
  in.uncond = batch.drop_reference;

  const ForwardResult res = model.forward(g, in);
  int64_t total_elems = 0;
  ad::NodePtr total;
  for (size_t i = 0; i < res.eps_views.size(); ++i) {
    auto diff = g.sub(res.eps_views[i],
                      g.constant(batch.eps[i].reshaped(
                          {batch.eps[i].rows(), batch.eps[i].cols()})));
    auto sq = g.sum(g.mul(diff, diff));
    total = total ? g.add(total, sq) : sq;
    total_elems += batch.eps[i].numel();
  }
  auto loss = g.scale(total, 1.0 / double(total_elems));
  require(std::isfinite(loss->val.data[0]), "train: non-finite loss");
  g.backward(loss);
  opt.step(model.params(), g);
  return loss->val.data[0];
}

struct TrainResult {
  std::vector<double> losses;
};

inline TrainResult train_model(MvDit& model,
                               const std::vector<PreparedScene>& scenes,
                               const DiffusionSchedule& sched,
                               const TrainConfig& cfg) {
  require(!scenes.empty(), "train: no scenes");
  Optimizer opt(cfg.opt);
  TrainResult result;
  std::ofstream csv;
  if (!cfg.loss_csv.empty()) {
    csv.open(cfg.loss_csv);
    require(csv.good(), "train: cannot open " + cfg.loss_csv.string());
    csv << "step,loss,lr\n";
  }
  for (int step = 0; step < cfg.steps; ++step) {
    const double lr = opt.current_lr();
    const double loss = train_step(model, scenes, sched, cfg, opt, step);
    result.losses.push_back(loss);
    if (csv.is_open()) {
      char line[96];
      std::snprintf(line, sizeof(line), "%d,%.10g,%.10g\n", step, loss, lr);
      csv << line;
    }
  }
  // record the joint sequence length for inference-time attention biasing
  const auto& ps = scenes[0];
  const int64_t tpv = (int64_t(ps.latent_h) / model.cfg.patch) *
                      (int64_t(ps.latent_w) / model.cfg.patch);
  model.cfg.n_train_tokens = tpv * (cfg.n_target_views + 1);
  return result;
}

// Which parameter prefixes a control variant trains during overfitting;
// everything else stays frozen.
inline std::vector<std::string> trainable_prefixes(ControlVariant v) {
  switch (v) {
    case ControlVariant::camera_mlp: return {"camera_mlp"};
    case ControlVariant::plucker_pe: return {"plucker_pe_mlp"};
    case ControlVariant::plucker_controlmlp: return {"control"};
    case ControlVariant::plucker_siren_controlmlp:
    case ControlVariant::no_anchor: return {"control", "siren"};
    case ControlVariant::anchor_full: return {"control", "siren"};
    case ControlVariant::no_plucker: return {"control"};
    case ControlVariant::cross_attn: return {};  // handled by name match
  }
  return {};
}

inline void freeze_for_variant(MvDit& model, ControlVariant v) {
  model.params().set_trainable_all(false);
  if (v == ControlVariant::cross_attn) {
    for (auto& e : model.params().entries())
      if (e.name.find(".xattn_") != std::string::npos) e.trainable = true;
    return;
  }
  for (const auto& prefix : trainable_prefixes(v))
    model.params().set_trainable_prefix(prefix, true);
}

struct OverfitConfig {
  ControlVariant variant = ControlVariant::anchor_full;
  bool baseline = false;  // no training, direct checkpoint evaluation
  int iters = 2000;
  std::vector<int> train_views, val_views;
  int ref_view = 0;  // must be a training view
  int n_target_views = 4;
  OptimizerConfig opt;
  uint64_t seed = 0;
  int eval_ddim_steps = 20;
  double eval_cfg_scale = 1.0;
};

struct OverfitResult {
  std::string variant;
  double psnr_train = 0;
  double psnr_val = 0;
};

namespace detail {

// PSNR of DDIM-sampled views against the ground-truth renders, sampled
// jointly in groups of at most n_target_views.
inline double eval_view_set(MvDit& model, const PreparedScene& ps,
                            const std::vector<int>& views, int ref_view,
                            const DiffusionSchedule& sched,
                            const OverfitConfig& cfg, uint64_t seed) {
  double total = 0;
  int count = 0;
  for (size_t start = 0; start < views.size();
       start += size_t(cfg.n_target_views)) {
    SampleViewsConfig sc;
    sc.view_indices.assign(
        views.begin() + int64_t(start),
        views.begin() +
            int64_t(std::min(views.size(), start + size_t(cfg.n_target_views))));
    sc.ref_view = ref_view;
    sc.ddim_steps = cfg.eval_ddim_steps;
    sc.cfg.base_scale = cfg.eval_cfg_scale;
    sc.cfg.mode = CfgMode::constant;
    sc.seed = mix_seed(seed, start);
    const SampleViewsResult res = sample_scene_views(model, ps, sc, sched);
    for (size_t i = 0; i < sc.view_indices.size(); ++i) {
      const Tensor gt = ps.scene.view_image(sc.view_indices[i]);
      total += psnr(res.images[i], gt);
      ++count;
    }
  }
  return total / std::max(count, 1);
}

}  // namespace detail

// Scene-overfitting control comparison: restores the mid-trained weights
// into the variant's architecture, trains only the control pathway on the
// training views, and reports train/val PSNR via DDIM sampling.
inline OverfitResult overfit_experiment(const std::filesystem::path& checkpoint,
                                        const PreparedScene& ps,
                                        const DiffusionSchedule& sched,
                                        const OverfitConfig& cfg) {
  auto base = checkpoint_load(checkpoint);
  require(base->cfg.mode() == TrainMode::midtrain,
          "overfit: expected a mid-trained checkpoint");
  require(!cfg.train_views.empty() && !cfg.val_views.empty(),
          "overfit: empty view split");
  require(std::find(cfg.train_views.begin(), cfg.train_views.end(),
                    cfg.ref_view) != cfg.train_views.end(),
          "overfit: reference view must be a training view");

  ModelConfig mc = base->cfg;
  mc.variant = cfg.variant;
  MvDit model(mc, mix_seed(cfg.seed, 0x6f766572ull));
  model.copy_matching_params(*base);

  OverfitResult out;
  out.variant = cfg.baseline ? "baseline" : to_string(cfg.variant);
  if (!cfg.baseline) {
    freeze_for_variant(model, cfg.variant);
    require(model.params().count_trainable() > 0,
            "overfit: variant has no trainable parameters");

    // train only on the training views: restrict the scene the trainer sees
    PreparedScene train_ps = ps;
    train_ps.views.clear();
    for (int v : cfg.train_views) train_ps.views.push_back(ps.views[size_t(v)]);
    int ref_local = 0;
    for (size_t i = 0; i < cfg.train_views.size(); ++i)
      if (cfg.train_views[i] == cfg.ref_view) ref_local = int(i);

    TrainConfig tc;
    tc.steps = cfg.iters;
    tc.n_target_views =
        std::min(cfg.n_target_views, int(cfg.train_views.size()) - 1);
    tc.ref_view = ref_local;
    tc.dropout_p = 0.0;  // overfitting: keep the reference always on
    tc.opt = cfg.opt;
    tc.seed = mix_seed(cfg.seed, 0x747261696eull);
    train_model(model, {train_ps}, sched, tc);
  } else {
    model.cfg.n_train_tokens = base->cfg.n_train_tokens;
  }

  out.psnr_train = detail::eval_view_set(model, ps, cfg.train_views,
                                         cfg.ref_view, sched, cfg,
                                         mix_seed(cfg.seed, 1));
  out.psnr_val = detail::eval_view_set(model, ps, cfg.val_views, cfg.ref_view,
                                       sched, cfg, mix_seed(cfg.seed, 2));
  return out;
}

}  // namespace mvdiff
