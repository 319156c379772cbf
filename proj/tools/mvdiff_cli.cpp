// Command-line surface: scene generation, training, overfitting runs,
// sampling, PSNR / reprojection-error evaluation, and entropy sweeps.
// Every command is a pure function of (config, seed, input files).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mvdiff/checkpoint.hpp"
#include "mvdiff/config.hpp"
#include "mvdiff/harness.hpp"
#include "mvdiff/image.hpp"
#include "mvdiff/probes.hpp"
#include "mvdiff/reprojection.hpp"
#include "mvdiff/scene.hpp"
#include "mvdiff/trainer.hpp"

namespace fs = std::filesystem;
using namespace mvdiff;

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

ModelConfig model_config_from(const KvConfig& kv) {
  ModelConfig cfg = model_config_from_kv(kv);
  cfg.validate();
  return cfg;
}

DiffusionSchedule schedule_from(const KvConfig& kv) {
  return make_schedule(int(kv.get_int("sched.T", 1000)),
                       kv.get_double("sched.beta_start", 1e-4),
                       kv.get_double("sched.beta_end", 0.02));
}

OptimizerConfig optimizer_from(const KvConfig& kv, const std::string& ns) {
  OptimizerConfig opt;
  opt.kind = kv.get_str(ns + ".optimizer", "adam");
  opt.lr = kv.get_double(ns + ".lr", 1e-4);
  opt.beta1 = kv.get_double(ns + ".beta1", 0.9);
  opt.beta2 = kv.get_double(ns + ".beta2", 0.98);
  opt.eps = kv.get_double(ns + ".eps", 1e-6);
  opt.warmup_init_lr = kv.get_double(ns + ".warmup_init_lr", 1e-6);
  opt.warmup_steps = int(kv.get_int(ns + ".warmup_steps", 1000));
  return opt;
}

CfgPolicy cfg_policy_from(const KvConfig& kv) {
  CfgPolicy p;
  p.base_scale = kv.get_double("sample.cfg_base", 1.0);
  p.peak_scale = kv.get_double("sample.cfg_peak", std::max(1.0, p.base_scale));
  const std::string mode = kv.get_str("sample.cfg_mode", "constant");
  require(mode == "constant" || mode == "bump",
          "config: sample.cfg_mode must be constant or bump");
  p.mode = mode == "bump" ? CfgMode::bump : CfgMode::constant;
  return p;
}

int cmd_gen_scene(const KvConfig& kv, uint64_t seed, const fs::path& out) {
  SceneGenParams params;
  params.n_views = int(kv.get_int("scene.views", 12));
  params.resolution = int(kv.get_int("scene.res", 32));
  params.n_objects = int(kv.get_int("scene.objects", 4));
  params.n_points = int(kv.get_int("scene.points", 200));
  params.latent_factor = int(kv.get_int("model.latent_downsample", 2));
  params.ring_radius = kv.get_double("scene.ring_radius", 2.5);
  gen_scene(seed, params, out);
  std::cout << "scene written to " << out.string() << "\n";
  return 0;
}

int cmd_train(const KvConfig& kv, uint64_t seed, const fs::path& out,
              const std::vector<std::string>& scene_dirs) {
  require(!scene_dirs.empty(), "train: pass at least one --scene");
  ModelConfig mc = model_config_from(kv);
  const DiffusionSchedule sched = schedule_from(kv);

  std::vector<PreparedScene> scenes;
  for (const auto& dir : scene_dirs)
    scenes.push_back(prepare_scene(
        load_scene(dir), mc, kv.get_double("scene.anchor_axis_len", 0.35)));

  MvDit model(mc, seed);
  TrainConfig tc;
  tc.steps = int(kv.get_int("train.steps", 600));
  tc.n_target_views = int(kv.get_int("train.views", 4));
  tc.ref_view = int(kv.get_int("train.ref_view", 0));
  tc.dropout_p = kv.get_double("train.dropout_p", 0.2);
  tc.ratio_multiplier = kv.get_double("sched.ratio_multiplier", 0.9);
  tc.opt = optimizer_from(kv, "train");
  tc.seed = seed;
  fs::create_directories(out);
  tc.loss_csv = out / "loss.csv";
  train_model(model, scenes, sched, tc);

  KvConfig extra;
  extra.set_int("train.steps", tc.steps);
  extra.set_int("train.views", tc.n_target_views);
  checkpoint_save(model, out / "checkpoint.bin", extra);
  std::cout << "checkpoint written to " << (out / "checkpoint.bin").string()
            << "\n";
  return 0;
}

int cmd_overfit(const KvConfig& kv, uint64_t seed, const fs::path& out,
                const std::string& checkpoint, const std::string& scene_dir,
                const std::string& variant) {
  const auto base_cfg = checkpoint_load(checkpoint)->cfg;
  const PreparedScene ps =
      prepare_scene(load_scene(scene_dir), base_cfg,
                    kv.get_double("scene.anchor_axis_len", 0.35));
  const DiffusionSchedule sched = schedule_from(kv);

  OverfitConfig oc;
  oc.baseline = variant == "baseline";
  if (!oc.baseline) oc.variant = variant_from_string(variant);
  oc.iters = int(kv.get_int("overfit.iters", 2000));
  oc.ref_view = int(kv.get_int("overfit.ref_view", 0));
  oc.n_target_views = int(kv.get_int("overfit.batch_views", 4));
  oc.opt = optimizer_from(kv, "overfit");
  oc.opt.warmup_steps = int(kv.get_int("overfit.warmup_steps", 100));
  oc.seed = seed;
  oc.eval_ddim_steps = int(kv.get_int("overfit.eval_steps", 20));
  oc.eval_cfg_scale = kv.get_double("overfit.eval_cfg", 1.0);

  const int n_views = int(ps.views.size());
  const int n_train = int(kv.get_int("overfit.train_views", (n_views * 2) / 3));
  require(n_train >= 2 && n_train < n_views, "overfit: bad train/val split");
  for (int v = 0; v < n_views; ++v)
    (v < n_train ? oc.train_views : oc.val_views).push_back(v);

  const OverfitResult res = overfit_experiment(checkpoint, ps, sched, oc);

  fs::create_directories(out);
  const fs::path csv_path = out / "overfit.csv";
  const bool fresh = !fs::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  require(csv.good(), "overfit: cannot open " + csv_path.string());
  if (fresh) csv << "variant,seed,iters,psnr_train,psnr_val\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%s,%llu,%d,%.6f,%.6f\n",
                res.variant.c_str(), static_cast<unsigned long long>(seed),
                oc.baseline ? 0 : oc.iters, res.psnr_train, res.psnr_val);
  csv << line;
  std::cout << res.variant << " psnr_train=" << res.psnr_train
            << " psnr_val=" << res.psnr_val << "\n";
  return 0;
}

int cmd_sample(const KvConfig& kv, uint64_t seed, const fs::path& out,
               const std::string& checkpoint, const std::string& scene_dir,
               const std::string& views_arg) {
  auto model = checkpoint_load(checkpoint);
  const PreparedScene ps =
      prepare_scene(load_scene(scene_dir), model->cfg,
                    kv.get_double("scene.anchor_axis_len", 0.35));
  const DiffusionSchedule sched = schedule_from(kv);

  SampleViewsConfig sc;
  if (!views_arg.empty()) {
    sc.view_indices = parse_int_list(views_arg);
  } else {
    const int n = int(kv.get_int("sample.n_views", 4));
    for (int v = 0; v < n; ++v)
      sc.view_indices.push_back(v % int(ps.views.size()));
  }
  for (int v : sc.view_indices)
    require(v >= 0 && v < int(ps.views.size()), "sample: view out of range");
  sc.ref_view = int(kv.get_int("sample.ref_view", 0));
  sc.ddim_steps = int(kv.get_int("sample.steps", 50));
  sc.cfg = cfg_policy_from(kv);
  sc.gamma = kv.get_double("sample.gamma", 0.0);
  sc.seed = seed;

  const SampleViewsResult res = sample_scene_views(*model, ps, sc, sched);

  fs::create_directories(out);
  std::ofstream manifest(out / "manifest.csv");
  manifest << "view,filename,azimuth_deg,cfg_scale,lambda\n";
  std::map<int, int> seen;
  for (size_t i = 0; i < sc.view_indices.size(); ++i) {
    // names match the scene's view files so eval-psnr can pair them up;
    // repeated views (turnaround sweeps) get a repetition suffix
    char name[48];
    const int rep = seen[sc.view_indices[i]]++;
    if (rep == 0)
      std::snprintf(name, sizeof(name), "view_%03d.png", sc.view_indices[i]);
    else
      std::snprintf(name, sizeof(name), "view_%03d_r%d.png",
                    sc.view_indices[i], rep);
    save_image_png(res.images[i], out / name);
    char line[192];
    std::snprintf(line, sizeof(line), "%d,%s,%.6f,%.6f,%.10g\n",
                  sc.view_indices[i], name, res.azimuths[i],
                  bump_cfg_scale(res.azimuths[i], sc.cfg), res.lambda);
    manifest << line;
  }
  std::cout << "wrote " << sc.view_indices.size() << " views to "
            << out.string() << "\n";
  return 0;
}

int cmd_eval_psnr(const fs::path& out, const std::string& gen_dir,
                  const std::string& gt_dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(gen_dir))
    if (e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), "eval-psnr: no PNG files in " + gen_dir);

  fs::create_directories(out);
  std::ofstream csv(out / "psnr.csv");
  csv << "filename,psnr\n";
  double total = 0;
  for (const auto& f : files) {
    const fs::path gt = fs::path(gt_dir) / f.filename();
    require(fs::exists(gt), "eval-psnr: missing ground truth " + gt.string());
    const double v = psnr(load_image_png(f), load_image_png(gt));
    total += v;
    char line[192];
    std::snprintf(line, sizeof(line), "%s,%.6f\n", f.filename().c_str(), v);
    csv << line;
  }
  const double mean = total / double(files.size());
  char line[64];
  std::snprintf(line, sizeof(line), "mean,%.6f\n", mean);
  csv << line;
  std::cout << "mean_psnr=" << mean << " over " << files.size() << " views\n";
  return 0;
}

int cmd_eval_re(const KvConfig& kv, uint64_t seed, const fs::path& out,
                const std::string& scene_dir, const std::string& matches_dir,
                const std::string& cameras_file) {
  const double conf_threshold = kv.get_double("re.conf_threshold", 0.2);
  const int min_matches = int(kv.get_int("re.min_matches", 5));

  std::vector<CameraParams> cameras;
  std::map<std::pair<int, int>, CorrespondenceSet> sets;

  if (!matches_dir.empty()) {
    // external-matches mode: replay matcher dumps against known cameras
    require(!cameras_file.empty(), "eval-re: --cameras required with --matches");
    load_cameras_json(cameras_file, &cameras, nullptr, nullptr);
    for (const auto& e : fs::directory_iterator(matches_dir)) {
      int a = -1, b = -1;
      if (std::sscanf(e.path().filename().string().c_str(), "matches_%d_%d.txt",
                      &a, &b) == 2)
        sets[{a, b}] = load_matches(e.path(), a, b);
    }
    require(!sets.empty(), "eval-re: no matches_*.txt files found");
  } else {
    // oracle mode: synthesize correspondences from the scene's 3D points
    require(!scene_dir.empty(), "eval-re: pass --scene or --matches");
    const ToyScene scene = load_scene(scene_dir);
    require(!scene.points.empty(), "eval-re: scene has no points3d.txt");
    cameras = scene.cameras;
    const double sigma = kv.get_double("re.sigma", 0.0);
    for (int a = 0; a < int(cameras.size()); ++a)
      for (int b = a + 1; b < int(cameras.size()); ++b)
        sets[{a, b}] = oracle_correspondences(
            scene.points, cameras[size_t(a)], cameras[size_t(b)], a, b, sigma,
            mix_seed(seed, uint64_t(a) * 1000 + uint64_t(b)));
  }

  const REReport report =
      dataset_re(sets, cameras, conf_threshold, min_matches, seed);
  fs::create_directories(out);
  std::ofstream text(out / "re_report.txt");
  std::ofstream csv(out / "re.csv");
  write_re_report(report, text, csv);
  std::cout << "mean_re=" << report.mean_re
            << " pairs_used=" << report.per_pair.size()
            << " pairs_rejected=" << report.n_rejected_pairs << "\n";
  return 0;
}

int cmd_entropy_sweep(const KvConfig& kv, uint64_t seed, const fs::path& out,
                      const std::string& checkpoint,
                      const std::string& scene_dir) {
  const std::vector<double> gammas =
      parse_double_list(kv.get_str("sweep.gammas", "1.0,1.2,1.4,1.6,2.0"));
  std::vector<EntropyProbeRow> rows;

  if (checkpoint.empty()) {
    AttentionBiasConfig bias;
    bias.d = kv.get_int("sweep.d", 64);
    bias.N_train = kv.get_int("sweep.n_train", 256);
    std::vector<int64_t> token_counts;
    for (int v : parse_int_list(kv.get_str("sweep.tokens", "256,1024,4096")))
      token_counts.push_back(v);
    rows = entropy_probe_gaussian(bias, token_counts, gammas,
                                  int(kv.get_int("sweep.seeds", 10)), seed);
  } else {
    require(!scene_dir.empty(), "entropy-sweep: model mode needs --scene");
    auto model = checkpoint_load(checkpoint);
    const PreparedScene ps =
        prepare_scene(load_scene(scene_dir), model->cfg,
                      kv.get_double("scene.anchor_axis_len", 0.35));
    ModelEntropyProbeConfig pc;
    pc.view_counts = parse_int_list(kv.get_str("sweep.views", "2,4,8"));
    pc.gammas = gammas;
    pc.ddim_steps = int(kv.get_int("sweep.steps", 8));
    pc.ref_view = int(kv.get_int("sample.ref_view", 0));
    pc.seed = seed;
    rows = entropy_probe_model(*model, ps, schedule_from(kv), pc);
  }

  fs::create_directories(out);
  std::ofstream csv(out / "entropy.csv");
  write_entropy_csv(rows, csv);
  std::cout << "wrote " << rows.size() << " rows to "
            << (out / "entropy.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale multi-view diffusion lab"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed = 0;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "flat key=value config file");
  app.add_option("--seed", seed, "global RNG seed");
  app.add_option("--out", out_dir, "output directory");

  auto* gen = app.add_subcommand("gen-scene", "generate a toy scene");

  std::vector<std::string> scene_dirs;
  auto* train = app.add_subcommand("train", "train a model on scenes");
  train->add_option("--scene", scene_dirs, "scene directory (repeatable)");

  std::string checkpoint, scene_dir, variant = "anchor_full", views_arg;
  auto* overfit =
      app.add_subcommand("overfit", "scene-overfitting control run");
  overfit->add_option("--checkpoint", checkpoint, "mid-trained checkpoint")
      ->required();
  overfit->add_option("--scene", scene_dir, "scene directory")->required();
  overfit->add_option("--variant", variant, "control variant or 'baseline'");

  auto* sample = app.add_subcommand("sample", "jointly sample novel views");
  sample->add_option("--checkpoint", checkpoint, "checkpoint")->required();
  sample->add_option("--scene", scene_dir, "scene directory")->required();
  sample->add_option("--views", views_arg, "comma-separated view indices");

  std::string gen_dir, gt_dir;
  auto* epsnr = app.add_subcommand("eval-psnr", "PSNR of generated views");
  epsnr->add_option("--gen", gen_dir, "generated image dir")->required();
  epsnr->add_option("--gt", gt_dir, "ground-truth image dir")->required();

  std::string matches_dir, cameras_file;
  auto* ere = app.add_subcommand("eval-re", "reprojection-error metric");
  ere->add_option("--scene", scene_dir, "scene directory (oracle mode)");
  ere->add_option("--matches", matches_dir, "matches_*.txt dir");
  ere->add_option("--cameras", cameras_file, "cameras.json for --matches");

  auto* sweep = app.add_subcommand("entropy-sweep", "entropy vs gamma table");
  sweep->add_option("--checkpoint", checkpoint,
                    "probe a checkpoint instead of random Q,K");
  sweep->add_option("--scene", scene_dir, "scene for model-mode probing");

  CLI11_PARSE(app, argc, argv);

  try {
    KvConfig kv;
    if (!config_path.empty()) kv = KvConfig::parse_file(config_path);
    const fs::path out(out_dir);

    if (gen->parsed()) return cmd_gen_scene(kv, seed, out);
    if (train->parsed()) return cmd_train(kv, seed, out, scene_dirs);
    if (overfit->parsed())
      return cmd_overfit(kv, seed, out, checkpoint, scene_dir, variant);
    if (sample->parsed())
      return cmd_sample(kv, seed, out, checkpoint, scene_dir, views_arg);
    if (epsnr->parsed()) return cmd_eval_psnr(out, gen_dir, gt_dir);
    if (ere->parsed())
      return cmd_eval_re(kv, seed, out, scene_dir, matches_dir, cameras_file);
    if (sweep->parsed())
      return cmd_entropy_sweep(kv, seed, out, checkpoint, scene_dir);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
