#include "agentreg/matching.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <tuple>

#include "agentreg/error.hpp"

namespace agentreg {

std::array<double, 4> FeatureGrid::extent(std::size_t p) const {
  const double h = 0.5 * patch_size;
  return {centers[p][0] - h, centers[p][0] + h, centers[p][1] - h, centers[p][1] + h};
}

void MatchingConfig::validate() const {
  if (top_c < 1) fail(ErrorKind::kConfig, "top_c must be >= 1");
  if (!(s_min >= -1.0) || !(s_fine >= -1.0)) {
    fail(ErrorKind::kConfig, "similarity thresholds must be >= -1");
  }
}

Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    fail(ErrorKind::kDimension, "similarity needs N×C and M×C inputs");
  }
  std::vector<double> na(a.rows()), nb(b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) na[i] = norm(a.row(i));
  for (std::size_t j = 0; j < b.rows(); ++j) nb[j] = norm(b.row(j));
  Tensor s({a.rows(), b.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      if (na[i] == 0.0 || nb[j] == 0.0) continue;
      s(i, j) = std::clamp(dot(a.row(i), b.row(j)) / (na[i] * nb[j]), -1.0, 1.0);
    }
  }
  return s;
}

namespace {

// Column indices of the c largest entries of each row, ties to lower index.
std::vector<std::vector<std::size_t>> row_top(const Tensor& s, std::size_t c,
                                              bool by_column) {
  const std::size_t n = by_column ? s.cols() : s.rows();
  const std::size_t m = by_column ? s.rows() : s.cols();
  const std::size_t keep = std::min(c, m);
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) idx[j] = j;
    auto value = [&](std::size_t j) { return by_column ? s(j, i) : s(i, j); };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(keep), idx.end(),
                      [&](std::size_t x, std::size_t y) {
                        const double vx = value(x), vy = value(y);
                        return vx != vy ? vx > vy : x < y;
                      });
    out[i].assign(idx.begin(), idx.begin() + static_cast<long>(keep));
  }
  return out;
}

bool contains(const std::vector<std::size_t>& v, std::size_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

std::vector<CoarseMatch> coarse_match(const FeatureGrid& image,
                                      const PointFeatures& points,
                                      const MatchingConfig& cfg) {
  cfg.validate();
  if (image.features.empty() || points.features.empty() ||
      image.features.rows() == 0 || points.features.rows() == 0) {
    return {};
  }
  const Tensor s = cosine_similarity_matrix(image.features, points.features);
  const auto patch_top = row_top(s, cfg.top_c, false);
  const auto point_top = row_top(s, cfg.top_c, true);
  std::vector<CoarseMatch> out;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j : patch_top[i]) {
      if (s(i, j) >= cfg.s_min && contains(point_top[j], i)) {
        out.push_back({i, j, s(i, j)});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const CoarseMatch& a, const CoarseMatch& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return std::tie(a.patch, a.superpoint) < std::tie(b.patch, b.superpoint);
  });
  return out;
}

std::vector<FineMatch> fine_match(const std::vector<CoarseMatch>& coarse,
                                  const FineImageSamples& image,
                                  const FinePoints& points,
                                  const PointFeatures& superpoints,
                                  const MatchingConfig& cfg) {
  if (image.features.rank() != 2 || points.features.rank() != 2 ||
      image.features.cols() != points.features.cols()) {
    fail(ErrorKind::kDimension, "fine features must share a channel count");
  }
  std::vector<std::vector<std::size_t>> pixels_of_patch;
  for (std::size_t s = 0; s < image.patch.size(); ++s) {
    if (image.patch[s] >= pixels_of_patch.size()) pixels_of_patch.resize(image.patch[s] + 1);
    pixels_of_patch[image.patch[s]].push_back(s);
  }

  std::vector<FineMatch> candidates;
  for (const CoarseMatch& cm : coarse) {
    if (cm.patch >= pixels_of_patch.size() || cm.superpoint >= superpoints.members.size()) {
      continue;
    }
    const auto& pix = pixels_of_patch[cm.patch];
    const auto& pts = superpoints.members[cm.superpoint];
    if (pix.empty() || pts.empty()) continue;
    Tensor fa({pix.size(), image.features.cols()});
    Tensor fb({pts.size(), points.features.cols()});
    for (std::size_t a = 0; a < pix.size(); ++a) {
      std::copy_n(image.features.row(pix[a]).begin(), fa.cols(), fa.row(a).begin());
    }
    for (std::size_t b = 0; b < pts.size(); ++b) {
      std::copy_n(points.features.row(pts[b]).begin(), fb.cols(), fb.row(b).begin());
    }
    const Tensor s = cosine_similarity_matrix(fa, fb);
    const auto best_b = row_top(s, 1, false);
    const auto best_a = row_top(s, 1, true);
    for (std::size_t a = 0; a < pix.size(); ++a) {
      const std::size_t b = best_b[a][0];
      if (best_a[b][0] != a || s(a, b) < cfg.s_fine) continue;
      candidates.push_back({image.uv[pix[a]], points.xyz[pts[b]], s(a, b), pix[a], pts[b]});
    }
  }

  // Deduplicate: best match per pixel and per point, deterministic order.
  std::stable_sort(candidates.begin(), candidates.end(), [](const FineMatch& a, const FineMatch& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return std::tie(a.pixel_index, a.point_index) < std::tie(b.pixel_index, b.point_index);
  });
  std::vector<FineMatch> out;
  std::vector<bool> pixel_used(image.uv.size(), false), point_used(points.xyz.size(), false);
  for (const FineMatch& m : candidates) {
    if (pixel_used[m.pixel_index] || point_used[m.point_index]) continue;
    pixel_used[m.pixel_index] = true;
    point_used[m.point_index] = true;
    out.push_back(m);
  }
  return out;
}

void write_correspondences_csv(std::ostream& out, const CorrespondenceSet& set,
                               const FeatureGrid& image,
                               const PointFeatures& points) {
  out << "u,v,x,y,z,similarity,level\n";
  out.precision(17);
  for (const CoarseMatch& m : set.coarse) {
    const Pixel& c = image.centers.at(m.patch);
    const Point3& p = points.positions.at(m.superpoint);
    out << c[0] << ',' << c[1] << ',' << p[0] << ',' << p[1] << ',' << p[2] << ','
        << m.similarity << ",coarse\n";
  }
  for (const FineMatch& m : set.fine) {
    out << m.uv[0] << ',' << m.uv[1] << ',' << m.xyz[0] << ',' << m.xyz[1] << ','
        << m.xyz[2] << ',' << m.similarity << ",fine\n";
  }
}

}  // namespace agentreg
