#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "mvdiff/error.hpp"

namespace mvdiff {

inline constexpr double kBehindCameraEps = 1e-9;
inline constexpr double kOrthonormalTol = 1e-9;

// Pinhole camera with a world-to-camera pose: x_cam = R * X_world + t.
// R is stored row-major in file formats; +z_cam looks into the scene.
struct CameraParams {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  int width = 0, height = 0;

  Eigen::Vector3d center() const { return -R.transpose() * t; }

  // World-frame direction the camera looks along (+z row of R).
  Eigen::Vector3d optical_axis() const { return R.row(2).transpose(); }

  // 3x4 projection matrix K [R | t].
  Eigen::Matrix<double, 3, 4> projection_matrix() const {
    Eigen::Matrix3d K;
    K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    Eigen::Matrix<double, 3, 4> Rt;
    Rt.leftCols<3>() = R;
    Rt.col(3) = t;
    return K * Rt;
  }
};

inline bool rotation_valid(const Eigen::Matrix3d& R, double tol = kOrthonormalTol) {
  const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

inline void validate_camera(const CameraParams& cam) {
  require(cam.fx > 0 && cam.fy > 0, "camera: focal lengths must be positive");
  require(cam.width >= 8 && cam.height >= 8, "camera: image size below 8 px");
  require(rotation_valid(cam.R), "camera: R is not a rotation");
}

// Projects a world point; nullopt when the point is at or behind the camera
// plane (x_cam.z <= 1e-9). Callers decide how to treat that case.
inline std::optional<Eigen::Vector2d> project_point(const CameraParams& cam,
                                                    const Eigen::Vector3d& X) {
  const Eigen::Vector3d xc = cam.R * X + cam.t;
  if (xc.z() <= kBehindCameraEps) return std::nullopt;
  return Eigen::Vector2d(cam.fx * xc.x() / xc.z() + cam.cx,
                         cam.fy * xc.y() / xc.z() + cam.cy);
}

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d dir;  // unit length, world frame
};

// World-frame ray through pixel coordinate (u, v).
inline Ray ray_for_pixel(const CameraParams& cam, double u, double v) {
  const Eigen::Vector3d dir_cam((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy,
                                1.0);
  Ray ray;
  ray.origin = cam.center();
  ray.dir = (cam.R.transpose() * dir_cam).normalized();
  return ray;
}

// Right-handed look-at pose: +z_cam toward target, y_cam aligned with up.
inline CameraParams look_at_camera(const Eigen::Vector3d& eye,
                                   const Eigen::Vector3d& target,
                                   const Eigen::Vector3d& up, double fx,
                                   double fy, double cx, double cy, int width,
                                   int height) {
  require((target - eye).norm() > 0, "look_at: eye equals target");
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = up.cross(z);
  require(x.norm() > 1e-9, "look_at: up parallel to view direction");
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);

  CameraParams cam;
  cam.R.row(0) = x.transpose();
  cam.R.row(1) = y.transpose();
  cam.R.row(2) = z.transpose();
  cam.t = -cam.R * eye;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = width;
  cam.height = height;
  validate_camera(cam);
  return cam;
}

}  // namespace mvdiff
