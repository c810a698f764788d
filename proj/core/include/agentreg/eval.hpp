#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "agentreg/matching.hpp"
#include "agentreg/pose.hpp"

namespace agentreg {

/// A metric value plus a flag set when it was computed over an empty input.
struct Fraction {
  double value = 0.0;
  bool empty = false;
};

struct MetricThresholds {
  double inlier_m = 0.05;
  double fmr_tau = 0.10;
  double rmse_m = 0.10;
  double patch_overlap = 0.3;

  void validate() const;
};

/// Fraction of pairs whose cloud point, moved by T_gt, lies within
/// threshold_m of the image-side 3D location (camera frame).
Fraction inlier_ratio(std::span<const Eigen::Vector3d> image_points,
                      std::span<const Eigen::Vector3d> cloud_points,
                      const RigidTransform& t_gt, double threshold_m = 0.05);

/// Fraction of pairs with IR strictly above tau.
Fraction feature_matching_recall(std::span<const double> per_pair_ir, double tau = 0.10);

double rmse(const RigidTransform& estimate, const RigidTransform& truth,
            std::span<const Eigen::Vector3d> cloud);

/// A missing estimate counts as not recalled.
Fraction registration_recall(std::span<const std::optional<RigidTransform>> estimates,
                             std::span<const RigidTransform> truths,
                             std::span<const std::vector<Eigen::Vector3d>> clouds,
                             double rmse_thresh = 0.10);

/// True when at least overlap of the superpoint's members project under T_gt
/// inside the patch's pixel extent.
bool patch_pair_is_inlier(const CoarseMatch& match, const FeatureGrid& grid,
                          const PointFeatures& superpoints,
                          std::span<const Eigen::Vector3d> cloud, const RigidTransform& t_gt,
                          const CameraIntrinsics& camera, double overlap = 0.3);

Fraction patch_inlier_ratio(std::span<const CoarseMatch> coarse, const FeatureGrid& grid,
                            const PointFeatures& superpoints,
                            std::span<const Eigen::Vector3d> cloud, const RigidTransform& t_gt,
                            const CameraIntrinsics& camera, double overlap = 0.3);

struct PairMetrics {
  std::string id;
  double ir = 0.0;
  double pir = 0.0;
  double rmse = 0.0;  // infinity when the pose failed
  bool pose_ok = false;
  bool recalled = false;
  double rotation_deg = 0.0;
  double translation_m = 0.0;
  std::size_t coarse_count = 0;
  std::size_t fine_count = 0;
  std::size_t ransac_inliers = 0;
  std::string failure;
};

struct MetricReport {
  std::string scene = "synthetic";
  std::vector<PairMetrics> pairs;
  double ir = 0.0;
  double fmr = 0.0;
  double rr = 0.0;
  double pir = 0.0;
  bool empty = true;

  /// Recompute the summary fractions from the per-pair rows.
  void summarize(const MetricThresholds& thresholds);
};

/// One row per pair then a summary row.
void write_report_csv(std::ostream& out, const MetricReport& report);
/// {"scenes": {scene: {IR, FMR, RR, PIR}}, "mean": {...}, "pairs": n, "empty": bool}
void write_report_json(std::ostream& out, const MetricReport& report);

}  // namespace agentreg
