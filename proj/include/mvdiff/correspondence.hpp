#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mvdiff/camera.hpp"
#include "mvdiff/rng.hpp"

namespace mvdiff {

struct Correspondence {
  int view_a = 0, view_b = 0;
  Eigen::Vector2d p_a = Eigen::Vector2d::Zero();
  Eigen::Vector2d p_b = Eigen::Vector2d::Zero();
  double confidence = 1.0;
};

// All matches for one (view_a, view_b) pair.
struct CorrespondenceSet {
  int view_a = 0, view_b = 0;
  std::vector<Correspondence> matches;
};

// Stand-in for a learned matcher: projects known scene points into both
// views, keeps the ones visible in both, and perturbs each observation with
// independent Gaussian pixel noise. Deterministic under seed.
inline CorrespondenceSet oracle_correspondences(
    const std::vector<Eigen::Vector3d>& scene_points, const CameraParams& cam_a,
    const CameraParams& cam_b, int view_a, int view_b,
    double pixel_noise_sigma, uint64_t rng_seed) {
  CorrespondenceSet set;
  set.view_a = view_a;
  set.view_b = view_b;
  Rng rng(rng_seed);
  for (const auto& X : scene_points) {
    const auto pa = project_point(cam_a, X);
    const auto pb = project_point(cam_b, X);
    if (!pa || !pb) continue;  // behind either camera: dropped
    Correspondence c;
    c.view_a = view_a;
    c.view_b = view_b;
    c.p_a = *pa + pixel_noise_sigma * Eigen::Vector2d(rng.normal(), rng.normal());
    c.p_b = *pb + pixel_noise_sigma * Eigen::Vector2d(rng.normal(), rng.normal());
    c.confidence = 1.0;
    set.matches.push_back(c);
  }
  return set;
}

// matches_<a>_<b>.txt: one "xa ya xb yb conf" line per match.
inline void save_matches(const CorrespondenceSet& set,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "save_matches: cannot open " + path.string());
  char line[256];
  for (const auto& m : set.matches) {
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g %.17g %.17g\n",
                  m.p_a.x(), m.p_a.y(), m.p_b.x(), m.p_b.y(), m.confidence);
    out << line;
  }
}

inline CorrespondenceSet load_matches(const std::filesystem::path& path,
                                      int view_a, int view_b) {
  std::ifstream in(path);
  require(in.good(), "load_matches: cannot open " + path.string());
  CorrespondenceSet set;
  set.view_a = view_a;
  set.view_b = view_b;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Correspondence c;
    c.view_a = view_a;
    c.view_b = view_b;
    ss >> c.p_a.x() >> c.p_a.y() >> c.p_b.x() >> c.p_b.y() >> c.confidence;
    require(!ss.fail(), "load_matches: malformed line in " + path.string());
    set.matches.push_back(c);
  }
  return set;
}

inline std::string matches_filename(int view_a, int view_b) {
  return "matches_" + std::to_string(view_a) + "_" + std::to_string(view_b) +
         ".txt";
}

}  // namespace mvdiff
