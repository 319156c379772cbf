#pragma once

#include "mvdiff/camera.hpp"
#include "mvdiff/tensor.hpp"

namespace mvdiff {

// Per-pixel ray field in Plücker form: unit direction d and moment
// m = o x d. Stored as an {H, W, 6} tensor with channels (dx,dy,dz,mx,my,mz).
struct PluckerGrid {
  int height = 0, width = 0;
  Tensor data;  // {H, W, 6}

  const double* at(int v, int u) const {
    return &data.data[size_t((int64_t(v) * width + u) * 6)];
  }
};

// Rays are cast through pixel centers (u+0.5, v+0.5).
inline PluckerGrid plucker_grid(const CameraParams& cam, int height,
                                int width) {
  validate_camera(cam);
  require(height >= 1 && width >= 1, "plucker_grid: empty grid");
  PluckerGrid grid;
  grid.height = height;
  grid.width = width;
  grid.data = Tensor({height, width, 6});

  // Rays share the camera center; map pixel centers through the camera's
  // own resolution so the grid can be built at latent resolution too.
  const double su = double(cam.width) / double(width);
  const double sv = double(cam.height) / double(height);
  double* out = grid.data.data.data();
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Ray ray =
          ray_for_pixel(cam, (u + 0.5) * su, (v + 0.5) * sv);
      const Eigen::Vector3d m = ray.origin.cross(ray.dir);
      *out++ = ray.dir.x();
      *out++ = ray.dir.y();
      *out++ = ray.dir.z();
      *out++ = m.x();
      *out++ = m.y();
      *out++ = m.z();
    }
  }
  return grid;
}

}  // namespace mvdiff
