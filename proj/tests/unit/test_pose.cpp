#include <doctest.h>

#include <cmath>
#include <sstream>

#include "agentreg/error.hpp"
#include "agentreg/pose.hpp"
#include "agentreg/synth.hpp"

using namespace agentreg;

TEST_CASE("projection examples") {
  const CameraIntrinsics k{100, 100, 50, 50};
  const Projection a = project(Eigen::Vector3d(0, 0, 1), RigidTransform::identity(), k);
  CHECK(a.valid);
  CHECK(a.uv.x() == 50.0);
  CHECK(a.uv.y() == 50.0);
  const Projection b = project(Eigen::Vector3d(0.1, 0, 1), RigidTransform::identity(), k);
  CHECK(b.uv.x() == doctest::Approx(60.0));
  CHECK(b.uv.y() == 50.0);
  CHECK_FALSE(project(Eigen::Vector3d(0, 0, 0), RigidTransform::identity(), k).valid);
  CHECK_FALSE(project(Eigen::Vector3d(0, 0, -2), RigidTransform::identity(), k).valid);
  CHECK_THROWS_AS((CameraIntrinsics{0, 1, 0, 0}.validate()), Error);
}

TEST_CASE("noiseless PnP recovers the pose") {
  Rng rng(81);
  for (int t = 0; t < 10; ++t) {
    const PnpProblem p = generate_pnp_problem(10, 0.0, 0.0, rng);
    const RigidTransform est = solve_pnp(p.pairs, p.camera);
    const PoseError e = pose_errors(est, p.t_gt);
    CHECK(e.rotation_deg * 3.14159265358979 / 180.0 < 1e-6);
    CHECK(e.translation_m < 1e-6);
    CHECK(est.is_valid());
  }
}

TEST_CASE("PnP with half-pixel noise") {
  Rng rng(82);
  for (int t = 0; t < 10; ++t) {
    const PnpProblem p = generate_pnp_problem(100, 0.5, 0.0, rng);
    const PoseError e = pose_errors(solve_pnp(p.pairs, p.camera), p.t_gt);
    CHECK(e.rotation_deg < 0.5);
    CHECK(e.translation_m < 0.02);
  }
}

TEST_CASE("PnP degenerate and insufficient inputs") {
  const CameraIntrinsics k{100, 100, 50, 50};
  std::vector<Correspondence2D3D> line;
  for (int i = 0; i < 8; ++i) {
    const Eigen::Vector3d x(0.1 * i, 0.0, 2.0);
    line.push_back({project(x, RigidTransform::identity(), k).uv, x});
  }
  try {
    solve_pnp(line, k);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerateConfiguration);
  }
  Rng rng(83);
  PnpProblem p = generate_pnp_problem(5, 0.0, 0.0, rng);
  try {
    solve_pnp(p.pairs, p.camera);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInsufficientData);
  }
  try {
    ransac_pnp(p.pairs, p.camera, {}, rng);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInsufficientData);
  }
}

TEST_CASE("RANSAC on clean data keeps every pair") {
  Rng rng(84);
  const PnpProblem p = generate_pnp_problem(100, 0.0, 0.0, rng);
  const RansacResult r = ransac_pnp(p.pairs, p.camera, {}, rng);
  CHECK(r.inlier_count == 100);
  CHECK(pose_errors(r.pose, p.t_gt).translation_m < 1e-6);
}

TEST_CASE("RANSAC with outliers, determinism and best-so-far inliers") {
  Rng gen(85);
  for (int t = 0; t < 5; ++t) {
    const PnpProblem p = generate_pnp_problem(100, 1.0, 0.3, gen);
    Rng a(1000 + t), b(1000 + t);
    const RansacResult r = ransac_pnp(p.pairs, p.camera, {}, a);
    const RansacResult r2 = ransac_pnp(p.pairs, p.camera, {}, b);
    CHECK(r.pose.rotation == r2.pose.rotation);
    CHECK(r.pose.translation == r2.pose.translation);
    CHECK(r.inliers == r2.inliers);
    CHECK(r.pose.is_valid(1e-9));
    CHECK(r.inlier_count >= r.best_hypothesis_inliers);
    std::size_t recovered = 0, truth = 0;
    for (std::size_t i = 0; i < p.pairs.size(); ++i) {
      if (!p.outliers[i]) {
        ++truth;
        recovered += r.inliers[i];
      }
    }
    CHECK(recovered >= 0.95 * static_cast<double>(truth));
    const PoseError e = pose_errors(r.pose, p.t_gt);
    CHECK(e.rotation_deg < 1.0);
    CHECK(e.translation_m < 0.01);
  }
}

TEST_CASE("RANSAC reports failure when nothing agrees") {
  Rng rng(86);
  PnpProblem p = generate_pnp_problem(30, 0.0, 1.0, rng);
  RansacConfig cfg;
  cfg.threshold_px = 1e-6;
  cfg.max_iters = 50;
  cfg.min_sample = 20;
  try {
    ransac_pnp(p.pairs, p.camera, cfg, rng);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEstimationFailure);
  }
}

TEST_CASE("pose errors") {
  Rng rng(87);
  const RigidTransform t = random_rigid_transform(45, 1, rng);
  const PoseError zero = pose_errors(t, t);
  CHECK(zero.rotation_deg < 1e-6);
  CHECK(zero.translation_m == 0.0);
  RigidTransform flip;
  flip.rotation = rotation_from_axis_angle(Eigen::Vector3d(0, 0, 3.14159265358979323846));
  CHECK(pose_errors(flip, RigidTransform::identity()).rotation_deg == doctest::Approx(180.0));

  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 20; ++i) pts.emplace_back(rng.normal(), rng.normal(), rng.normal());
  const auto moved = transform_points(pts, t);
  const auto back = transform_points(moved, t.inverse());
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK((back[i] - pts[i]).norm() < 1e-12);
  CHECK(t.is_valid());
}

TEST_CASE("pose errors are unchanged by a common change of frame") {
  Rng rng(88);
  for (int i = 0; i < 20; ++i) {
    const RigidTransform gt = random_rigid_transform(45, 1, rng);
    const RigidTransform est = random_rigid_transform(10, 0.1, rng).compose(gt);
    const RigidTransform frame = random_rigid_transform(90, 2, rng);
    const PoseError a = pose_errors(est, gt);
    const PoseError b = pose_errors(frame.compose(est), frame.compose(gt));
    CHECK(std::abs(a.rotation_deg - b.rotation_deg) < 1e-6);
    CHECK(std::abs(a.translation_m - b.translation_m) < 1e-12);
  }
}

TEST_CASE("trajectory files round-trip") {
  Rng rng(89);
  const RigidTransform a = random_rigid_transform(30, 1, rng), b = random_rigid_transform(30, 1, rng);
  std::stringstream ss;
  write_transform(ss, a);
  write_transform(ss, b);
  const auto back = read_transforms(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].rotation == a.rotation);
  CHECK(back[1].translation == b.translation);
  std::stringstream bad("1 2 3\n");
  CHECK_THROWS_AS(read_transforms(bad), Error);
}
