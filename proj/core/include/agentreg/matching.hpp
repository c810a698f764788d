#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "agentreg/numerics.hpp"

namespace agentreg {

using Pixel = std::array<double, 2>;
using Point3 = std::array<double, 3>;

struct FeatureGrid {
  Tensor features;             // P_i×C
  std::vector<Pixel> centers;  // pixel (u, v) of each patch center
  double patch_size = 8.0;     // pixels
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;

  std::size_t size() const { return centers.size(); }
  /// Pixel extent [u0,u1)×[v0,v1) of patch p.
  std::array<double, 4> extent(std::size_t p) const;
};

struct PointFeatures {
  Tensor features;                                // P_p×C
  std::vector<Point3> positions;                  // superpoint centers, metres
  std::vector<std::vector<std::size_t>> members;  // fine-point indices per superpoint

  std::size_t size() const { return positions.size(); }
};

struct CoarseMatch {
  std::size_t patch = 0;
  std::size_t superpoint = 0;
  double similarity = 0.0;
};

struct FineMatch {
  Pixel uv{};
  Point3 xyz{};
  double similarity = 0.0;
  std::size_t pixel_index = 0;  // into the fine image sample list
  std::size_t point_index = 0;  // into the fine point list
};

struct CorrespondenceSet {
  std::vector<CoarseMatch> coarse;
  std::vector<FineMatch> fine;
};

struct MatchingConfig {
  std::size_t top_c = 3;
  double s_min = 0.0;
  double s_fine = 0.0;

  void validate() const;
};

/// Pairwise cosine similarities (rows of a against rows of b). A zero row
/// gives similarity 0 everywhere.
Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b);

/// Mutual top-c pairs with similarity >= s_min, sorted by similarity
/// descending then by (patch, superpoint).
std::vector<CoarseMatch> coarse_match(const FeatureGrid& image,
                                      const PointFeatures& points,
                                      const MatchingConfig& cfg);

/// Dense samples on the image side: each carries a pixel, a feature row and
/// the patch it falls in.
struct FineImageSamples {
  Tensor features;               // S×C_f
  std::vector<Pixel> uv;
  std::vector<std::size_t> patch;
};

struct FinePoints {
  Tensor features;               // N×C_f
  std::vector<Point3> xyz;
};

/// Within every coarse pair, mutual nearest neighbours (by cosine) between the
/// patch's pixel samples and the superpoint's member points with similarity
/// >= s_fine. A pixel or point claimed by several coarse pairs keeps only its
/// highest-similarity match.
std::vector<FineMatch> fine_match(const std::vector<CoarseMatch>& coarse,
                                  const FineImageSamples& image,
                                  const FinePoints& points,
                                  const PointFeatures& superpoints,
                                  const MatchingConfig& cfg);

/// CSV with header u,v,x,y,z,similarity,level. Coarse rows use the patch
/// center and superpoint position.
void write_correspondences_csv(std::ostream& out, const CorrespondenceSet& set,
                               const FeatureGrid& image,
                               const PointFeatures& points);

}  // namespace agentreg
