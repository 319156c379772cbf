#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "mvdiff/camera.hpp"
#include "mvdiff/tensor.hpp"

namespace mvdiff {

// Oriented 3D point fixing the subject placement; column 2 of R is the
// forward (gaze) axis, column 1 the up axis.
struct SpatialAnchor {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d forward() const { return R.col(2); }
  Eigen::Vector3d up() const { return R.col(1); }
};

inline void validate_anchor(const SpatialAnchor& a) {
  require(rotation_valid(a.R), "anchor: R is not a rotation");
}

// Color-coded projection of the anchor axes; black background, pure
// red/green/blue 1-px line segments for the x/y/z axes.
struct AnchorImage {
  int height = 0, width = 0;
  Tensor pixels;  // {H, W, 3}, values in [0, 1]
};

namespace detail {

inline void draw_segment(AnchorImage& img, Eigen::Vector2d p0,
                         Eigen::Vector2d p1, const std::array<double, 3>& rgb) {
  // Liang-Barsky clip to the image rectangle.
  const double xmin = 0.0, ymin = 0.0;
  const double xmax = double(img.width), ymax = double(img.height);
  double t0 = 0.0, t1 = 1.0;
  const double dx = p1.x() - p0.x(), dy = p1.y() - p0.y();
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {p0.x() - xmin, xmax - p0.x(), p0.y() - ymin,
                       ymax - p0.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return;  // parallel and outside
    } else {
      const double r = q[i] / p[i];
      if (p[i] < 0.0) {
        if (r > t1) return;
        t0 = std::max(t0, r);
      } else {
        if (r < t0) return;
        t1 = std::min(t1, r);
      }
    }
  }
  const Eigen::Vector2d a = p0 + t0 * Eigen::Vector2d(dx, dy);
  const Eigen::Vector2d b = p0 + t1 * Eigen::Vector2d(dx, dy);
  const int steps =
      1 + int(std::ceil(std::max(std::abs(b.x() - a.x()),
                                 std::abs(b.y() - a.y()))));
  for (int i = 0; i <= steps; ++i) {
    const double s = double(i) / double(steps);
    const int u = int(std::floor(a.x() + s * (b.x() - a.x())));
    const int v = int(std::floor(a.y() + s * (b.y() - a.y())));
    if (u < 0 || u >= img.width || v < 0 || v >= img.height) continue;
    double* px = &img.pixels.data[size_t((int64_t(v) * img.width + u) * 3)];
    px[0] = rgb[0];
    px[1] = rgb[1];
    px[2] = rgb[2];
  }
}

}  // namespace detail

// Rasterizes three axis segments of length axis_len from the anchor origin,
// clipped against the near plane; an anchor fully behind the camera yields
// an all-black image.
inline AnchorImage render_anchor_image(const SpatialAnchor& anchor,
                                       const CameraParams& cam, int height,
                                       int width, double axis_len = 0.1) {
  validate_anchor(anchor);
  validate_camera(cam);
  require(axis_len > 0, "render_anchor_image: axis_len must be positive");

  AnchorImage img;
  img.height = height;
  img.width = width;
  img.pixels = Tensor({height, width, 3});

  const double su = double(width) / double(cam.width);
  const double sv = double(height) / double(cam.height);
  const double z_near = 1e-6;
  static constexpr std::array<std::array<double, 3>, 3> colors = {
      {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d a = cam.R * anchor.t + cam.t;
    Eigen::Vector3d b =
        cam.R * (anchor.t + axis_len * anchor.R.col(k)) + cam.t;
    if (a.z() <= z_near && b.z() <= z_near) continue;
    if (a.z() <= z_near || b.z() <= z_near) {
      const double s = (z_near - a.z()) / (b.z() - a.z());
      const Eigen::Vector3d clipped = a + s * (b - a);
      if (a.z() <= z_near)
        a = clipped;
      else
        b = clipped;
    }
    const Eigen::Vector2d pa((cam.fx * a.x() / a.z() + cam.cx) * su,
                             (cam.fy * a.y() / a.z() + cam.cy) * sv);
    const Eigen::Vector2d pb((cam.fx * b.x() / b.z() + cam.cx) * su,
                             (cam.fy * b.y() / b.z() + cam.cy) * sv);
    detail::draw_segment(img, pa, pb, colors[size_t(k)]);
  }
  return img;
}

}  // namespace mvdiff
