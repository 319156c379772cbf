#include <gtest/gtest.h>

#include <algorithm>

#include "mvdiff/scene.hpp"
#include "mvdiff/trainer.hpp"

using namespace mvdiff;
namespace fs = std::filesystem;

namespace {

// Micro configuration so 2000 optimization steps stay cheap: 8 px scenes,
// 4x4 latents, 4 tokens per view.
ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.patch = 2;
  cfg.latent_downsample = 2;
  return cfg;
}

std::vector<PreparedScene> micro_scenes(int n) {
  std::vector<PreparedScene> scenes;
  for (int i = 0; i < n; ++i) {
    SceneGenParams params;
    params.n_views = 4;
    params.resolution = 8;
    params.n_objects = 2;
    params.n_points = 10;
    const fs::path d = fs::temp_directory_path() /
                       ("mvdiff_progress_scene_" + std::to_string(i));
    fs::remove_all(d);
    scenes.push_back(prepare_scene(gen_scene(100 + uint64_t(i), params, d),
                                   micro_config()));
  }
  return scenes;
}

double trailing_mean(const std::vector<double>& v, size_t upto, size_t n) {
  double total = 0;
  for (size_t i = upto - n; i < upto; ++i) total += v[i];
  return total / double(n);
}

}  // namespace

// Training progress on a 4-scene set: the loss level after 2000 steps is
// below the level after 100 steps (median over 3 seeds, trailing-window
// means to damp the per-batch noise).
TEST(TrainingProgress, LossAfter2000BelowLossAfter100) {
  const auto scenes = micro_scenes(4);
  const DiffusionSchedule sched = make_schedule();
  std::vector<double> early, late;
  for (uint64_t seed : {1, 2, 3}) {
    MvDit model(micro_config(), seed);
    TrainConfig tc;
    tc.steps = 2000;
    tc.n_target_views = 2;
    tc.ref_view = 0;
    tc.dropout_p = 0.2;
    tc.seed = seed;
    tc.opt.lr = 1e-3;
    tc.opt.warmup_steps = 50;
    const TrainResult res = train_model(model, scenes, sched, tc);
    early.push_back(trailing_mean(res.losses, 100, 20));
    late.push_back(trailing_mean(res.losses, 2000, 20));
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
  };
  const double e = median(early), l = median(late);
  std::cout << "loss@100=" << e << " loss@2000=" << l << "\n";
  EXPECT_LT(l, e);
}
