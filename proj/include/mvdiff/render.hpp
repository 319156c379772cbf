#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mvdiff/camera.hpp"
#include "mvdiff/rng.hpp"
#include "mvdiff/tensor.hpp"

namespace mvdiff {

// Flat-shaded toy scene primitives: lambertian spheres and axis-aligned
// boxes on a black background. Rendering casts one ray per pixel center and
// keeps the nearest hit, which makes occlusion exact and output
// deterministic.

struct SceneObject {
  enum class Kind { sphere, box } kind = Kind::sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extent = Eigen::Vector3d::Zero();  // boxes
  double radius = 0;                                      // spheres
  Eigen::Vector3d color = Eigen::Vector3d::Ones();

  double bounding_radius() const {
    return kind == Kind::sphere ? radius : half_extent.norm();
  }
};

struct Hit {
  double dist = 0;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  const SceneObject* object = nullptr;
};

namespace detail {

inline std::optional<Hit> intersect_sphere(const SceneObject& s,
                                           const Eigen::Vector3d& o,
                                           const Eigen::Vector3d& d) {
  const Eigen::Vector3d oc = o - s.center;
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t < 1e-9) t = -b + sq;
  if (t < 1e-9) return std::nullopt;
  Hit h;
  h.dist = t;
  h.normal = (o + t * d - s.center).normalized();
  h.object = &s;
  return h;
}

inline std::optional<Hit> intersect_box(const SceneObject& s,
                                        const Eigen::Vector3d& o,
                                        const Eigen::Vector3d& d) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  int axis_min = 0;
  for (int k = 0; k < 3; ++k) {
    const double lo = s.center(k) - s.half_extent(k);
    const double hi = s.center(k) + s.half_extent(k);
    if (std::abs(d(k)) < 1e-15) {
      if (o(k) < lo || o(k) > hi) return std::nullopt;
      continue;
    }
    double t0 = (lo - o(k)) / d(k);
    double t1 = (hi - o(k)) / d(k);
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      axis_min = k;
    }
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return std::nullopt;
  }
  double t = tmin;
  if (t < 1e-9) return std::nullopt;  // origin inside: treat as miss
  Hit h;
  h.dist = t;
  h.normal = Eigen::Vector3d::Zero();
  const Eigen::Vector3d p = o + t * d;
  h.normal(axis_min) = p(axis_min) > s.center(axis_min) ? 1.0 : -1.0;
  h.object = &s;
  return h;
}

}  // namespace detail

inline std::optional<Hit> trace_nearest(const std::vector<SceneObject>& objects,
                                        const Eigen::Vector3d& o,
                                        const Eigen::Vector3d& d) {
  std::optional<Hit> best;
  for (const auto& obj : objects) {
    const auto h = obj.kind == SceneObject::Kind::sphere
                       ? detail::intersect_sphere(obj, o, d)
                       : detail::intersect_box(obj, o, d);
    if (h && (!best || h->dist < best->dist)) best = h;
  }
  return best;
}

inline const Eigen::Vector3d& render_light_dir() {
  static const Eigen::Vector3d dir = Eigen::Vector3d(0.4, -1.0, 0.5).normalized();
  return dir;
}

// {H, W, 3} image in [0, 1].
inline Tensor render_scene(const std::vector<SceneObject>& objects,
                           const CameraParams& cam, int height, int width) {
  Tensor image({height, width, 3});
  const double su = double(cam.width) / double(width);
  const double sv = double(cam.height) / double(height);
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u) {
      const Ray ray = ray_for_pixel(cam, (u + 0.5) * su, (v + 0.5) * sv);
      const auto hit = trace_nearest(objects, ray.origin, ray.dir);
      if (!hit) continue;
      const double lambert =
          std::max(0.0, hit->normal.dot(-render_light_dir()));
      const double shade = 0.25 + 0.75 * lambert;
      double* px = &image.data[size_t((int64_t(v) * width + u) * 3)];
      for (int c = 0; c < 3; ++c)
        px[c] = std::clamp(hit->object->color(c) * shade, 0.0, 1.0);
    }
  return image;
}

// Uniform surface sample on one object.
inline Eigen::Vector3d sample_surface_point(const SceneObject& obj, Rng& rng) {
  if (obj.kind == SceneObject::Kind::sphere) {
    // uniform direction via normalized gaussian triple
    Eigen::Vector3d d(rng.normal(), rng.normal(), rng.normal());
    while (d.norm() < 1e-9) d = {rng.normal(), rng.normal(), rng.normal()};
    return obj.center + obj.radius * d.normalized();
  }
  // pick a face weighted by area, then uniform on the face
  const Eigen::Vector3d& e = obj.half_extent;
  const double areas[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
  const double total = areas[0] + areas[1] + areas[2];
  double r = rng.uniform() * total;
  int axis = 0;
  for (; axis < 2; ++axis) {
    if (r < areas[axis]) break;
    r -= areas[axis];
  }
  Eigen::Vector3d p = obj.center;
  p(axis) += (rng.bernoulli(0.5) ? 1.0 : -1.0) * e(axis);
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  p(a1) += rng.uniform(-e(a1), e(a1));
  p(a2) += rng.uniform(-e(a2), e(a2));
  return p;
}

// A surface point is visible when it projects inside the image and no other
// geometry occludes the segment from the camera center.
inline bool point_visible(const std::vector<SceneObject>& objects,
                          const CameraParams& cam, const Eigen::Vector3d& X) {
  const auto px = project_point(cam, X);
  if (!px) return false;
  if (px->x() < 0 || px->x() >= cam.width || px->y() < 0 ||
      px->y() >= cam.height)
    return false;
  const Eigen::Vector3d o = cam.center();
  const Eigen::Vector3d diff = X - o;
  const double dist = diff.norm();
  const auto hit = trace_nearest(objects, o, diff / dist);
  return hit && hit->dist >= dist - 1e-6;
}

}  // namespace mvdiff
