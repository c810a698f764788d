#pragma once

// Synthetic scenes with known pose and correspondences, plus a planted
// informative-query task for the agent scores.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "agentreg/matching.hpp"
#include "agentreg/numerics.hpp"
#include "agentreg/pose.hpp"

namespace agentreg {

struct SceneSpec {
  std::size_t grid_rows = 8;
  std::size_t grid_cols = 8;
  double patch_size = 4.0;    // pixels
  std::size_t n_points = 512;  // spread round-robin over the patches
  CameraIntrinsics camera{40.0, 40.0, 16.0, 16.0};
  double depth_min = 2.0;
  double depth_max = 4.0;
  double depth_jitter = 0.1;  // per-point depth spread around the patch depth
  double rotation_max_deg = 45.0;
  double translation_max_m = 1.0;
  std::size_t feature_dim = 16;
  std::size_t latent_dim = 8;
  std::size_t fine_dim = 8;
  double sigma_feat = 0.3;
  double sigma_fine = 0.05;
  double sigma_render = 0.02;
  double modality_gap = 0.0;  // point decoder = image decoder + gap·noise
  double repetition = 0.0;    // fraction of patches with cloned latents
  double outlier_fraction = 0.0;
  double mask_fraction = 0.0;  // patches without a point-side counterpart
  double distractor_fraction = 0.0;
  // 0: every point gets its own fine latent. Otherwise the j-th point of
  // each patch uses code j mod fine_codebook, shared by all patches.
  std::size_t fine_codebook = 0;
  // The first image_blind_dims latent dims are missing from the image-side
  // features and reach the image only through the rendered colours.
  std::size_t image_blind_dims = 0;
  std::uint64_t world_seed = 7;  // decoders shared by every pair

  std::size_t patch_count() const { return grid_rows * grid_cols; }
  std::size_t image_height() const;
  std::size_t image_width() const;
  void validate() const;
};

/// Fixed linear maps from latents to features and pixels.
struct SceneDecoders {
  Tensor image;   // C×D
  Tensor point;   // C×D
  Tensor render;  // 3×D

  static SceneDecoders from_spec(const SceneSpec& spec);
};

struct SyntheticPair {
  std::string id;
  CameraIntrinsics camera;
  Tensor image;  // H×W×3
  FeatureGrid grid;
  std::vector<double> patch_depth;
  FineImageSamples pixels;
  std::vector<Eigen::Vector3d> pixel_points;  // camera-frame ground truth per sample
  std::vector<Eigen::Vector3d> cloud;         // cloud frame
  PointFeatures superpoints;
  FinePoints points;
  RigidTransform t_gt;  // cloud -> camera
  std::vector<CoarseMatch> gt_coarse;
  std::vector<std::pair<std::size_t, std::size_t>> gt_fine;  // (sample, point)
  std::vector<std::size_t> cloned_patches;
  std::vector<std::size_t> masked_patches;
};

SyntheticPair generate_pair(const SceneSpec& spec, Rng& rng);

RigidTransform random_rigid_transform(double rotation_max_deg, double translation_max_m,
                                      Rng& rng);

/// Replaces exactly round(fraction·n) pixels with uniform draws over
/// [0,width)×[0,height); returns the outlier mask.
std::vector<bool> corrupt_correspondences(std::vector<Correspondence2D3D>& pairs,
                                          double fraction, double width, double height,
                                          Rng& rng);

struct PnpProblem {
  std::vector<Correspondence2D3D> pairs;
  std::vector<bool> outliers;
  RigidTransform t_gt;
  CameraIntrinsics camera;
};

/// n points in general position inside a 640×480 frustum, projected under a
/// random pose with Gaussian pixel noise, then corrupted.
PnpProblem generate_pnp_problem(std::size_t n, double noise_px, double outlier_fraction,
                                Rng& rng);

struct PlantedQueryTask {
  Tensor image_pooled;  // C
  Tensor point_pooled;  // C
  Tensor queries;       // M×C
  std::vector<std::size_t> planted;  // sorted
};

/// Pooled features share a k-dimensional subspace. Planted queries lie near
/// their common direction (local reward >= 0.8); the rest are isotropic.
PlantedQueryTask generate_planted_query_task(std::size_t m, std::size_t k, std::size_t c,
                                             Rng& rng);

/// Directory layout: binary tensors, cloud.xyz, gt_pose.txt, manifest.txt.
void write_pair(const std::string& dir, const SyntheticPair& pair);
SyntheticPair read_pair(const std::string& dir);

}  // namespace agentreg
