#include "agentreg/pose.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "agentreg/error.hpp"

namespace agentreg {

namespace {

constexpr int kMaxRefineIterations = 20;
constexpr double kRefineStepTolerance = 1e-10;
constexpr double kDltRankTolerance = 1e-9;

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

double reprojection_cost(std::span<const Correspondence2D3D> pairs,
                         const RigidTransform& pose, const CameraIntrinsics& k) {
  double cost = 0.0;
  for (const auto& c : pairs) {
    const Projection p = project(c.point, pose, k);
    if (!p.valid) return std::numeric_limits<double>::infinity();
    cost += (p.uv - c.pixel).squaredNorm();
  }
  return cost;
}

RigidTransform refine(std::span<const Correspondence2D3D> pairs, RigidTransform pose,
                      const CameraIntrinsics& k) {
  double cost = reprojection_cost(pairs, pose, k);
  for (int it = 0; it < kMaxRefineIterations && std::isfinite(cost); ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : pairs) {
      const Eigen::Vector3d rx = pose.rotation * c.point;
      const Eigen::Vector3d p = rx + pose.translation;
      const double iz = 1.0 / p.z();
      Eigen::Vector2d r(k.fx * p.x() * iz + k.cx - c.pixel.x(),
                        k.fy * p.y() * iz + k.cy - c.pixel.y());
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0, -k.fx * p.x() * iz * iz, 0, k.fy * iz, -k.fy * p.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dp;
      dp.leftCols<3>() = -skew(rx);  // left perturbation exp(δω)·R
      dp.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> j = dproj * dp;
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }
    const Eigen::Matrix<double, 6, 1> step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) break;
    RigidTransform next;
    next.rotation = nearest_rotation(rotation_from_axis_angle(step.head<3>()) * pose.rotation);
    next.translation = pose.translation + step.tail<3>();
    const double next_cost = reprojection_cost(pairs, next, k);
    if (!(next_cost <= cost)) break;
    pose = next;
    cost = next_cost;
    if (step.norm() < kRefineStepTolerance) break;
  }
  return pose;
}

}  // namespace

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

bool RigidTransform::is_valid(double tol) const {
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol &&
         translation.allFinite();
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) fail(ErrorKind::kConfig, "focal lengths must be positive");
}

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Projection project(const Eigen::Vector3d& point, const RigidTransform& pose,
                   const CameraIntrinsics& camera) {
  const Eigen::Vector3d p = pose.apply(point);
  Projection out;
  out.valid = p.z() > kMinDepth;
  if (out.valid) {
    out.uv = {camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy};
  }
  return out;
}

std::vector<Projection> project(std::span<const Eigen::Vector3d> points,
                                const RigidTransform& pose,
                                const CameraIntrinsics& camera) {
  std::vector<Projection> out;
  out.reserve(points.size());
  for (const auto& x : points) out.push_back(project(x, pose, camera));
  return out;
}

RigidTransform solve_pnp(std::span<const Correspondence2D3D> pairs,
                         const CameraIntrinsics& camera) {
  camera.validate();
  const std::size_t n = pairs.size();
  if (n < 6) {
    fail(ErrorKind::kInsufficientData,
         "PnP needs at least 6 correspondences, got " + std::to_string(n));
  }
  // Normalize the 3D points (centroid, mean distance √3) and the image rays
  // (centroid, mean distance √2) before building the DLT system.
  Eigen::Vector3d mean3 = Eigen::Vector3d::Zero();
  Eigen::Vector2d mean2 = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> rays(n);
  for (std::size_t i = 0; i < n; ++i) {
    rays[i] = {(pairs[i].pixel.x() - camera.cx) / camera.fx,
               (pairs[i].pixel.y() - camera.cy) / camera.fy};
    mean3 += pairs[i].point;
    mean2 += rays[i];
  }
  mean3 /= static_cast<double>(n);
  mean2 /= static_cast<double>(n);
  double spread3 = 0.0, spread2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    spread3 += (pairs[i].point - mean3).norm();
    spread2 += (rays[i] - mean2).norm();
  }
  spread3 /= static_cast<double>(n);
  spread2 /= static_cast<double>(n);
  if (spread3 <= 0.0 || spread2 <= 0.0) {
    fail(ErrorKind::kDegenerateConfiguration, "PnP correspondences are coincident");
  }
  const double s3 = std::sqrt(3.0) / spread3;
  const double s2 = std::sqrt(2.0) / spread2;

  Eigen::MatrixXd a(2 * n, 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d x = (pairs[i].point - mean3) * s3;
    const Eigen::Vector2d r = (rays[i] - mean2) * s2;
    Eigen::Matrix<double, 1, 4> xh;
    xh << x.transpose(), 1.0;
    a.row(2 * i) << xh, Eigen::Matrix<double, 1, 4>::Zero(), -r.x() * xh;
    a.row(2 * i + 1) << Eigen::Matrix<double, 1, 4>::Zero(), xh, -r.y() * xh;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  if (sv(10) <= kDltRankTolerance * sv(0)) {
    fail(ErrorKind::kDegenerateConfiguration,
         "PnP system is rank deficient (coplanar or collinear points)");
  }
  const Eigen::VectorXd h = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> p_norm;
  p_norm << h.segment<4>(0).transpose(), h.segment<4>(4).transpose(), h.segment<4>(8).transpose();

  // Undo the normalizations: P = T2⁻¹ · P̃ · T3.
  Eigen::Matrix3d t2_inv = Eigen::Matrix3d::Identity();
  t2_inv(0, 0) = t2_inv(1, 1) = 1.0 / s2;
  t2_inv(0, 2) = mean2.x();
  t2_inv(1, 2) = mean2.y();
  Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
  t3.topLeftCorner<3, 3>() *= s3;
  t3.topRightCorner<3, 1>() = -s3 * mean3;
  Eigen::Matrix<double, 3, 4> p = t2_inv * p_norm * t3;

  Eigen::Matrix3d m = p.leftCols<3>();
  if (m.determinant() < 0.0) {
    p = -p;
    m = -m;
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> msvd(m);
  const double scale = msvd.singularValues().mean();
  if (!(scale > 0.0)) {
    fail(ErrorKind::kDegenerateConfiguration, "PnP produced a zero-scale projection");
  }
  RigidTransform pose;
  pose.rotation = nearest_rotation(m);
  pose.translation = p.col(3) / scale;
  return refine(pairs, pose, camera);
}

void RansacConfig::validate() const {
  if (!(threshold_px > 0.0)) fail(ErrorKind::kConfig, "RANSAC threshold must be positive");
  if (max_iters < 1) fail(ErrorKind::kConfig, "RANSAC needs at least one iteration");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    fail(ErrorKind::kConfig, "RANSAC confidence must lie in (0, 1)");
  }
  if (min_sample < 6) fail(ErrorKind::kConfig, "RANSAC min_sample must be >= 6");
}

std::vector<bool> reprojection_inliers(std::span<const Correspondence2D3D> pairs,
                                       const RigidTransform& pose,
                                       const CameraIntrinsics& camera,
                                       double threshold_px) {
  std::vector<bool> mask(pairs.size(), false);
  const double t2 = threshold_px * threshold_px;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Projection p = project(pairs[i].point, pose, camera);
    mask[i] = p.valid && (p.uv - pairs[i].pixel).squaredNorm() < t2;
  }
  return mask;
}

RansacResult ransac_pnp(std::span<const Correspondence2D3D> pairs,
                        const CameraIntrinsics& camera, const RansacConfig& cfg,
                        Rng& rng) {
  cfg.validate();
  camera.validate();
  const std::size_t n = pairs.size();
  if (n < cfg.min_sample) {
    fail(ErrorKind::kInsufficientData, "RANSAC needs at least " +
                                           std::to_string(cfg.min_sample) +
                                           " correspondences, got " + std::to_string(n));
  }
  RansacResult best;
  bool have_best = false;
  std::vector<std::size_t> order(n);
  std::vector<Correspondence2D3D> sample(cfg.min_sample);
  std::size_t needed = cfg.max_iters;
  std::size_t it = 0;
  for (; it < std::min(cfg.max_iters, needed); ++it) {
    // Partial Fisher-Yates draw of min_sample distinct indices.
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = 0; i < cfg.min_sample; ++i) {
      const std::size_t j = i + rng.uniform_index(n - i);
      std::swap(order[i], order[j]);
      sample[i] = pairs[order[i]];
    }
    RigidTransform hypothesis;
    try {
      hypothesis = solve_pnp(sample, camera);
    } catch (const Error&) {
      continue;
    }
    std::vector<bool> mask = reprojection_inliers(pairs, hypothesis, camera, cfg.threshold_px);
    const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    if (!have_best || count > best.inlier_count) {
      have_best = true;
      best.pose = hypothesis;
      best.inliers = std::move(mask);
      best.inlier_count = count;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double miss = 1.0 - std::pow(w, static_cast<double>(cfg.min_sample));
      if (miss <= 0.0) {
        needed = it + 1;
      } else if (miss < 1.0) {
        const double k = std::log(1.0 - cfg.confidence) / std::log(miss);
        needed = static_cast<std::size_t>(std::min(std::ceil(k), static_cast<double>(cfg.max_iters)));
      }
    }
  }
  best.iterations = it;
  best.best_hypothesis_inliers = best.inlier_count;
  if (!have_best || best.inlier_count < cfg.min_sample) {
    fail(ErrorKind::kEstimationFailure, "RANSAC found no hypothesis with enough inliers");
  }

  std::vector<Correspondence2D3D> support;
  for (std::size_t i = 0; i < n; ++i) {
    if (best.inliers[i]) support.push_back(pairs[i]);
  }
  try {
    const RigidTransform refit = solve_pnp(support, camera);
    std::vector<bool> mask = reprojection_inliers(pairs, refit, camera, cfg.threshold_px);
    const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    if (count >= best.inlier_count) {
      best.pose = refit;
      best.inliers = std::move(mask);
      best.inlier_count = count;
    }
  } catch (const Error&) {
    // Keep the best hypothesis.
  }
  return best;
}

PoseError pose_errors(const RigidTransform& estimate, const RigidTransform& truth) {
  const double c = std::clamp(
      ((truth.rotation.transpose() * estimate.rotation).trace() - 1.0) / 2.0, -1.0, 1.0);
  return {std::acos(c) * 180.0 / std::numbers::pi,
          (estimate.translation - truth.translation).norm()};
}

std::vector<Eigen::Vector3d> transform_points(std::span<const Eigen::Vector3d> points,
                                              const RigidTransform& pose) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(points.size());
  for (const auto& x : points) out.push_back(pose.apply(x));
  return out;
}

void write_transform(std::ostream& out, const RigidTransform& pose) {
  const auto old = out.precision(17);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << pose.rotation(r, c) << ' ';
  }
  out << pose.translation.x() << ' ' << pose.translation.y() << ' ' << pose.translation.z()
      << '\n';
  out.precision(old);
}

std::vector<RigidTransform> read_transforms(std::istream& in) {
  std::vector<RigidTransform> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double v[12];
    for (double& x : v) {
      if (!(ls >> x)) {
        fail(ErrorKind::kFormat, "trajectory line " + std::to_string(line_no) +
                                     " does not hold 12 numbers");
      }
    }
    std::string extra;
    if (ls >> extra) {
      fail(ErrorKind::kFormat, "trajectory line " + std::to_string(line_no) +
                                   " has more than 12 numbers");
    }
    RigidTransform t;
    t.rotation << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
    t.translation << v[9], v[10], v[11];
    out.push_back(t);
  }
  return out;
}

}  // namespace agentreg
