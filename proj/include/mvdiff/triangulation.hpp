#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <optional>
#include <vector>

#include "mvdiff/camera.hpp"

namespace mvdiff {

struct Observation {
  CameraParams cam;
  Eigen::Vector2d pixel;
};

// Homogeneous DLT system: each observation contributes the two rows
// u*P3 - P1 and v*P3 - P2, where Pk are the rows of its projection matrix.
// With normalize=true, pixel coordinates are pre-conditioned (Hartley-style
// shift/scale per view) before assembling the system; off by default.
inline Eigen::MatrixXd dlt_system(const std::vector<Observation>& obs,
                                  bool normalize = false) {
  Eigen::MatrixXd A(2 * obs.size(), 4);
  for (size_t i = 0; i < obs.size(); ++i) {
    Eigen::Matrix<double, 3, 4> P = obs[i].cam.projection_matrix();
    Eigen::Vector2d px = obs[i].pixel;
    if (normalize) {
      // map pixels to roughly [-1,1]; fold the same transform into P
      const double s = 2.0 / std::max(obs[i].cam.width, obs[i].cam.height);
      const double ox = 0.5 * obs[i].cam.width, oy = 0.5 * obs[i].cam.height;
      Eigen::Matrix3d T;
      T << s, 0, -s * ox, 0, s, -s * oy, 0, 0, 1;
      P = T * P;
      px = Eigen::Vector2d(s * (px.x() - ox), s * (px.y() - oy));
    }
    A.row(int64_t(2 * i)) = px.x() * P.row(2) - P.row(0);
    A.row(int64_t(2 * i + 1)) = px.y() * P.row(2) - P.row(1);
  }
  return A;
}

// Unit null vector of the system (smallest singular vector), dehomogenized;
// minimizes algebraic error.
inline std::optional<Eigen::Vector3d> dlt_solve(const Eigen::MatrixXd& A) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // nullspace of dimension >= 2 (identical cameras, degenerate geometry)
  if (sv(2) <= 1e-9 * std::max(sv(0), 1e-300)) return std::nullopt;
  Eigen::Vector4d X = svd.matrixV().col(3);
  if (std::abs(X(3)) < 1e-12) return std::nullopt;  // point at infinity
  return Eigen::Vector3d(X(0) / X(3), X(1) / X(3), X(2) / X(3));
}

inline std::optional<Eigen::Vector3d> try_dlt_triangulate(
    const std::vector<Observation>& obs, bool normalize = false) {
  if (obs.size() < 2) return std::nullopt;
  return dlt_solve(dlt_system(obs, normalize));
}

inline Eigen::Vector3d dlt_triangulate(const std::vector<Observation>& obs,
                                       bool normalize = false) {
  require(obs.size() >= 2, "dlt_triangulate: need at least 2 observations");
  auto X = try_dlt_triangulate(obs, normalize);
  if (!X) throw DegenerateTriangulation("dlt_triangulate: degenerate system");
  return *X;
}

}  // namespace mvdiff
