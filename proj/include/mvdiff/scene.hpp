#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mvdiff/anchor.hpp"
#include "mvdiff/camera.hpp"
#include "mvdiff/image.hpp"
#include "mvdiff/render.hpp"
#include "mvdiff/rng.hpp"

namespace mvdiff {

// On-disk toy scene: cameras.json (views + anchor + seed), one PNG per
// view, and points3d.txt with ground-truth surface samples for the oracle
// matcher. Regeneration from (seed, params) is bit-identical.
struct ToyScene {
  std::filesystem::path dir;
  std::vector<CameraParams> cameras;
  SpatialAnchor anchor;
  std::vector<Eigen::Vector3d> points;
  uint64_t seed = 0;
  int resolution = 0;

  std::filesystem::path view_path(int v) const {
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d.png", v);
    return dir / name;
  }

  Tensor view_image(int v) const { return load_image_png(view_path(v)); }
};

namespace scene_json {

inline nlohmann::json camera_to_json(const CameraParams& cam) {
  nlohmann::json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  std::vector<double> R(9), t(3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) R[size_t(r * 3 + c)] = cam.R(r, c);
  for (int r = 0; r < 3; ++r) t[size_t(r)] = cam.t(r);
  j["R"] = R;
  j["t"] = t;
  return j;
}

inline CameraParams camera_from_json(const nlohmann::json& j) {
  CameraParams cam;
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  const auto R = j.at("R").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  require(R.size() == 9 && t.size() == 3, "cameras.json: bad R/t arrays");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.R(r, c) = R[size_t(r * 3 + c)];
  for (int r = 0; r < 3; ++r) cam.t(r) = t[size_t(r)];
  validate_camera(cam);
  return cam;
}

}  // namespace scene_json

inline void save_cameras_json(const std::vector<CameraParams>& cameras,
                              const SpatialAnchor& anchor, uint64_t seed,
                              const std::filesystem::path& path) {
  nlohmann::json j;
  j["views"] = nlohmann::json::array();
  for (const auto& cam : cameras)
    j["views"].push_back(scene_json::camera_to_json(cam));
  std::vector<double> aR(9), at(3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) aR[size_t(r * 3 + c)] = anchor.R(r, c);
  for (int r = 0; r < 3; ++r) at[size_t(r)] = anchor.t(r);
  j["anchor"] = {{"R", aR}, {"t", at}};
  j["seed"] = seed;
  std::ofstream out(path);
  require(out.good(), "cameras.json: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

inline void load_cameras_json(const std::filesystem::path& path,
                              std::vector<CameraParams>* cameras,
                              SpatialAnchor* anchor, uint64_t* seed) {
  std::ifstream in(path);
  require(in.good(), "cameras.json: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  if (cameras) {
    cameras->clear();
    for (const auto& vj : j.at("views"))
      cameras->push_back(scene_json::camera_from_json(vj));
  }
  if (anchor && j.contains("anchor")) {
    const auto aR = j["anchor"].at("R").get<std::vector<double>>();
    const auto at = j["anchor"].at("t").get<std::vector<double>>();
    require(aR.size() == 9 && at.size() == 3, "cameras.json: bad anchor");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) anchor->R(r, c) = aR[size_t(r * 3 + c)];
    for (int r = 0; r < 3; ++r) anchor->t(r) = at[size_t(r)];
    validate_anchor(*anchor);
  }
  if (seed) *seed = j.value("seed", uint64_t(0));
}

inline void save_points3d(const std::vector<Eigen::Vector3d>& points,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "points3d: cannot open " + path.string());
  char line[128];
  for (const auto& p : points) {
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", p.x(), p.y(),
                  p.z());
    out << line;
  }
}

inline std::vector<Eigen::Vector3d> load_points3d(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "points3d: cannot open " + path.string());
  std::vector<Eigen::Vector3d> points;
  double x, y, z;
  while (in >> x >> y >> z) points.emplace_back(x, y, z);
  return points;
}

struct SceneGenParams {
  int n_views = 12;
  int resolution = 32;
  int n_objects = 4;
  int n_points = 200;
  int latent_factor = 2;  // resolution must divide by this
  double ring_radius = 2.5;
};

// Procedural multi-view scene: colored lambertian spheres/boxes near the
// origin, a camera ring built with look_at_camera (every view centers the
// origin on its principal point), the anchor at the largest object's center
// facing view 0, rendered views, and surface samples visible in >= 2 views.
inline ToyScene gen_scene(uint64_t seed, const SceneGenParams& params,
                          const std::filesystem::path& out_dir) {
  require(params.n_views >= 4, "gen_scene: need at least 4 views");
  require(params.resolution >= 8, "gen_scene: resolution too small");
  require(params.resolution % params.latent_factor == 0,
          "gen_scene: resolution not divisible by latent factor");
  const int n_objects = std::clamp(params.n_objects, 2, 8);

  std::filesystem::create_directories(out_dir);
  Rng rng(mix_seed(seed, 0x7363656eull));  // "scen"

  // objects: one dominant sphere as the subject plus smaller satellites
  std::vector<SceneObject> objects;
  static const double palette[8][3] = {
      {0.90, 0.20, 0.20}, {0.20, 0.75, 0.25}, {0.25, 0.35, 0.95},
      {0.95, 0.80, 0.15}, {0.80, 0.25, 0.85}, {0.20, 0.80, 0.80},
      {0.95, 0.55, 0.15}, {0.85, 0.85, 0.85}};
  for (int i = 0; i < n_objects; ++i) {
    SceneObject obj;
    const double* col = palette[rng.uniform_int(0, 7)];
    obj.color = Eigen::Vector3d(col[0], col[1], col[2]);
    if (i == 0) {
      obj.kind = SceneObject::Kind::sphere;
      obj.center = Eigen::Vector3d(rng.uniform(-0.1, 0.1),
                                   rng.uniform(-0.1, 0.1),
                                   rng.uniform(-0.1, 0.1));
      obj.radius = rng.uniform(0.45, 0.6);
    } else {
      obj.kind = rng.bernoulli(0.5) ? SceneObject::Kind::sphere
                                    : SceneObject::Kind::box;
      Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
      if (dir.norm() < 1e-6) dir = Eigen::Vector3d::UnitX();
      obj.center = dir.normalized() * rng.uniform(0.7, 1.1);
      if (obj.kind == SceneObject::Kind::sphere) {
        obj.radius = rng.uniform(0.15, 0.3);
      } else {
        obj.half_extent = Eigen::Vector3d(rng.uniform(0.12, 0.25),
                                          rng.uniform(0.12, 0.25),
                                          rng.uniform(0.12, 0.25));
      }
    }
    objects.push_back(obj);
  }

  // camera ring with mild seeded elevation jitter
  const int res = params.resolution;
  const double focal = 1.1 * res;
  std::vector<CameraParams> cameras;
  std::vector<Eigen::Vector3d> eyes;
  for (int v = 0; v < params.n_views; ++v) {
    const double theta =
        2.0 * std::numbers::pi * double(v) / double(params.n_views);
    const double height = rng.uniform(-0.5, 0.5);
    const Eigen::Vector3d eye(params.ring_radius * std::cos(theta), height,
                              params.ring_radius * std::sin(theta));
    eyes.push_back(eye);
    cameras.push_back(look_at_camera(eye, Eigen::Vector3d::Zero(),
                                     Eigen::Vector3d::UnitY(), focal, focal,
                                     res / 2.0, res / 2.0, res, res));
  }

  // anchor: largest object's center, forward axis toward view 0
  size_t largest = 0;
  for (size_t i = 1; i < objects.size(); ++i)
    if (objects[i].bounding_radius() > objects[largest].bounding_radius())
      largest = i;
  SpatialAnchor anchor;
  anchor.t = objects[largest].center;
  const Eigen::Vector3d fwd = (eyes[0] - anchor.t).normalized();
  Eigen::Vector3d up = Eigen::Vector3d::UnitY() -
                       fwd * (Eigen::Vector3d::UnitY().dot(fwd));
  require(up.norm() > 1e-9, "gen_scene: degenerate anchor orientation");
  up.normalize();
  anchor.R.col(2) = fwd;
  anchor.R.col(1) = up;
  anchor.R.col(0) = up.cross(fwd);
  validate_anchor(anchor);

  // surface samples visible in at least two views
  std::vector<Eigen::Vector3d> points;
  const int max_attempts = params.n_points * 200;
  for (int attempt = 0;
       attempt < max_attempts && int(points.size()) < params.n_points;
       ++attempt) {
    const auto& obj = objects[size_t(rng.uniform_int(0, n_objects - 1))];
    const Eigen::Vector3d p = sample_surface_point(obj, rng);
    int visible = 0;
    for (const auto& cam : cameras)
      if (point_visible(objects, cam, p)) ++visible;
    if (visible >= 2) points.push_back(p);
  }
  require(int(points.size()) >= std::min(params.n_points, 20),
          "gen_scene: could not sample enough visible surface points");

  // emit files
  for (int v = 0; v < params.n_views; ++v) {
    const Tensor img = render_scene(objects, cameras[size_t(v)], res, res);
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d.png", v);
    save_image_png(img, out_dir / name);
  }
  save_cameras_json(cameras, anchor, seed, out_dir / "cameras.json");
  save_points3d(points, out_dir / "points3d.txt");

  ToyScene scene;
  scene.dir = out_dir;
  scene.cameras = cameras;
  scene.anchor = anchor;
  scene.points = points;
  scene.seed = seed;
  scene.resolution = res;
  return scene;
}

inline ToyScene load_scene(const std::filesystem::path& dir) {
  ToyScene scene;
  scene.dir = dir;
  load_cameras_json(dir / "cameras.json", &scene.cameras, &scene.anchor,
                    &scene.seed);
  require(!scene.cameras.empty(), "load_scene: no cameras in " + dir.string());
  scene.resolution = scene.cameras[0].width;
  const auto pts = dir / "points3d.txt";
  if (std::filesystem::exists(pts)) scene.points = load_points3d(pts);
  return scene;
}

}  // namespace mvdiff
