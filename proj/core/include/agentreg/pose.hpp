#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "agentreg/numerics.hpp"

namespace agentreg {

/// x_cam = R·x + t.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }
  Eigen::Vector3d apply(const Eigen::Vector3d& x) const {
    return rotation * x + translation;
  }
  RigidTransform inverse() const;
  /// (this ∘ other)(x) = this(other(x)).
  RigidTransform compose(const RigidTransform& other) const;
  /// R ∈ SO(3) within tol.
  bool is_valid(double tol = 1e-9) const;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const;
};

struct Projection {
  Eigen::Vector2d uv = Eigen::Vector2d::Zero();
  bool valid = false;
};

inline constexpr double kMinDepth = 1e-6;

std::vector<Projection> project(std::span<const Eigen::Vector3d> points,
                                const RigidTransform& pose,
                                const CameraIntrinsics& camera);
Projection project(const Eigen::Vector3d& point, const RigidTransform& pose,
                   const CameraIntrinsics& camera);

struct Correspondence2D3D {
  Eigen::Vector2d pixel;
  Eigen::Vector3d point;
};

/// DLT on normalized coordinates, nearest rotation by SVD, then Gauss-Newton
/// on the reprojection error (at most 20 iterations or until the step is
/// below 1e-10). Needs >= 6 pairs in general position.
RigidTransform solve_pnp(std::span<const Correspondence2D3D> pairs,
                         const CameraIntrinsics& camera);

struct RansacConfig {
  double threshold_px = 8.0;
  std::size_t max_iters = 5000;
  double confidence = 0.999;
  std::size_t min_sample = 6;

  void validate() const;
};

struct RansacResult {
  RigidTransform pose;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  std::size_t iterations = 0;
  /// Largest inlier count reached by any sampled hypothesis.
  std::size_t best_hypothesis_inliers = 0;
};

RansacResult ransac_pnp(std::span<const Correspondence2D3D> pairs,
                        const CameraIntrinsics& camera, const RansacConfig& cfg,
                        Rng& rng);

/// Inlier mask of a pose under a pixel threshold.
std::vector<bool> reprojection_inliers(std::span<const Correspondence2D3D> pairs,
                                       const RigidTransform& pose,
                                       const CameraIntrinsics& camera,
                                       double threshold_px);

struct PoseError {
  double rotation_deg = 0.0;
  double translation_m = 0.0;
};

PoseError pose_errors(const RigidTransform& estimate, const RigidTransform& truth);

std::vector<Eigen::Vector3d> transform_points(std::span<const Eigen::Vector3d> points,
                                              const RigidTransform& pose);

/// Trajectory line: R row-major then t, 12 whitespace-separated numbers.
void write_transform(std::ostream& out, const RigidTransform& pose);
std::vector<RigidTransform> read_transforms(std::istream& in);

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& axis_angle);

}  // namespace agentreg
