#include "agentreg/eval.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include <json.hpp>

#include "agentreg/error.hpp"

namespace agentreg {

void MetricThresholds::validate() const {
  if (!(inlier_m > 0.0)) fail(ErrorKind::kConfig, "inlier threshold must be positive");
  if (!(fmr_tau >= 0.0 && fmr_tau <= 1.0)) fail(ErrorKind::kConfig, "fmr tau must lie in [0,1]");
  if (!(rmse_m > 0.0)) fail(ErrorKind::kConfig, "rmse threshold must be positive");
  if (!(patch_overlap >= 0.0 && patch_overlap <= 1.0)) {
    fail(ErrorKind::kConfig, "patch overlap must lie in [0,1]");
  }
}

Fraction inlier_ratio(std::span<const Eigen::Vector3d> image_points,
                      std::span<const Eigen::Vector3d> cloud_points,
                      const RigidTransform& t_gt, double threshold_m) {
  if (image_points.size() != cloud_points.size()) {
    fail(ErrorKind::kDimension, "inlier_ratio needs one image point per cloud point");
  }
  if (image_points.empty()) return {0.0, true};
  std::size_t hits = 0;
  for (std::size_t i = 0; i < image_points.size(); ++i) {
    if ((t_gt.apply(cloud_points[i]) - image_points[i]).norm() < threshold_m) ++hits;
  }
  return {static_cast<double>(hits) / static_cast<double>(image_points.size()), false};
}

Fraction feature_matching_recall(std::span<const double> per_pair_ir, double tau) {
  if (per_pair_ir.empty()) return {0.0, true};
  std::size_t hits = 0;
  for (double ir : per_pair_ir) {
    if (ir > tau) ++hits;
  }
  return {static_cast<double>(hits) / static_cast<double>(per_pair_ir.size()), false};
}

double rmse(const RigidTransform& estimate, const RigidTransform& truth,
            std::span<const Eigen::Vector3d> cloud) {
  if (cloud.empty()) fail(ErrorKind::kInsufficientData, "rmse needs a nonempty cloud");
  double acc = 0.0;
  for (const auto& x : cloud) acc += (estimate.apply(x) - truth.apply(x)).squaredNorm();
  return std::sqrt(acc / static_cast<double>(cloud.size()));
}

Fraction registration_recall(std::span<const std::optional<RigidTransform>> estimates,
                             std::span<const RigidTransform> truths,
                             std::span<const std::vector<Eigen::Vector3d>> clouds,
                             double rmse_thresh) {
  if (estimates.size() != truths.size() || estimates.size() != clouds.size()) {
    fail(ErrorKind::kDimension, "registration_recall inputs differ in length");
  }
  if (estimates.empty()) return {0.0, true};
  std::size_t hits = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (estimates[i] && rmse(*estimates[i], truths[i], clouds[i]) < rmse_thresh) ++hits;
  }
  return {static_cast<double>(hits) / static_cast<double>(estimates.size()), false};
}

bool patch_pair_is_inlier(const CoarseMatch& match, const FeatureGrid& grid,
                          const PointFeatures& superpoints,
                          std::span<const Eigen::Vector3d> cloud, const RigidTransform& t_gt,
                          const CameraIntrinsics& camera, double overlap) {
  const auto& members = superpoints.members.at(match.superpoint);
  if (members.empty()) return false;
  const auto box = grid.extent(match.patch);
  std::size_t inside = 0;
  for (std::size_t idx : members) {
    const Projection p = project(cloud[idx], t_gt, camera);
    if (p.valid && p.uv.x() >= box[0] && p.uv.x() < box[1] && p.uv.y() >= box[2] &&
        p.uv.y() < box[3]) {
      ++inside;
    }
  }
  return static_cast<double>(inside) >= overlap * static_cast<double>(members.size());
}

Fraction patch_inlier_ratio(std::span<const CoarseMatch> coarse, const FeatureGrid& grid,
                            const PointFeatures& superpoints,
                            std::span<const Eigen::Vector3d> cloud, const RigidTransform& t_gt,
                            const CameraIntrinsics& camera, double overlap) {
  if (coarse.empty()) return {0.0, true};
  std::size_t hits = 0;
  for (const auto& m : coarse) {
    if (patch_pair_is_inlier(m, grid, superpoints, cloud, t_gt, camera, overlap)) ++hits;
  }
  return {static_cast<double>(hits) / static_cast<double>(coarse.size()), false};
}

void MetricReport::summarize(const MetricThresholds& thresholds) {
  empty = pairs.empty();
  ir = fmr = rr = pir = 0.0;
  if (empty) return;
  std::vector<double> irs;
  double rr_hits = 0.0;
  for (const auto& p : pairs) {
    irs.push_back(p.ir);
    ir += p.ir;
    pir += p.pir;
    if (p.recalled) rr_hits += 1.0;
  }
  const double n = static_cast<double>(pairs.size());
  ir /= n;
  pir /= n;
  rr = rr_hits / n;
  fmr = feature_matching_recall(irs, thresholds.fmr_tau).value;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + '"';
}

}  // namespace

void write_report_csv(std::ostream& out, const MetricReport& report) {
  const auto old = out.precision(17);
  out << "pair,ir,pir,rmse,pose_ok,recalled,rotation_deg,translation_m,coarse,fine,"
         "ransac_inliers,failure\n";
  for (const auto& p : report.pairs) {
    out << p.id << ',' << p.ir << ',' << p.pir << ',' << p.rmse << ',' << p.pose_ok << ','
        << p.recalled << ',' << p.rotation_deg << ',' << p.translation_m << ','
        << p.coarse_count << ',' << p.fine_count << ',' << p.ransac_inliers << ','
        << csv_field(p.failure) << '\n';
  }
  out << "summary,IR=" << report.ir << ",PIR=" << report.pir << ",FMR=" << report.fmr
      << ",RR=" << report.rr << ",pairs=" << report.pairs.size()
      << ",empty=" << report.empty << ",,,,,\n";
  out.precision(old);
}

void write_report_json(std::ostream& out, const MetricReport& report) {
  nlohmann::ordered_json row;
  row["IR"] = report.ir;
  row["FMR"] = report.fmr;
  row["RR"] = report.rr;
  row["PIR"] = report.pir;
  nlohmann::ordered_json j;
  j["scenes"][report.scene] = row;
  j["mean"] = row;
  j["pairs"] = report.pairs.size();
  j["empty"] = report.empty;
  out << j.dump(2) << '\n';
}

}  // namespace agentreg
