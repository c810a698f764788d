#include "agentreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "agentreg/error.hpp"

namespace agentreg {

namespace fs = std::filesystem;

std::size_t SceneSpec::image_height() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(grid_rows) * patch_size));
}

std::size_t SceneSpec::image_width() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(grid_cols) * patch_size));
}

void SceneSpec::validate() const {
  auto fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(ErrorKind::kConfig, std::string(name) + " must lie in [0,1]");
    }
  };
  if (grid_rows < 1 || grid_cols < 1) fail(ErrorKind::kConfig, "patch grid must be nonempty");
  if (!(patch_size >= 1.0) || std::floor(patch_size) != patch_size) {
    fail(ErrorKind::kConfig, "patch_size must be a positive whole number of pixels");
  }
  if (n_points < patch_count()) fail(ErrorKind::kConfig, "n_points must be >= patch count");
  camera.validate();
  if (!(depth_min > 0.0 && depth_max >= depth_min)) {
    fail(ErrorKind::kConfig, "depth range must be positive and ordered");
  }
  if (!(depth_jitter >= 0.0 && depth_jitter < depth_min)) {
    fail(ErrorKind::kConfig, "depth_jitter must lie in [0, depth_min)");
  }
  if (!(rotation_max_deg >= 0.0 && rotation_max_deg <= 180.0)) {
    fail(ErrorKind::kConfig, "rotation_max_deg must lie in [0,180]");
  }
  if (!(translation_max_m >= 0.0)) fail(ErrorKind::kConfig, "translation_max_m must be >= 0");
  if (feature_dim < 1 || latent_dim < 1 || fine_dim < 1) {
    fail(ErrorKind::kConfig, "feature dimensions must be positive");
  }
  if (!(sigma_feat >= 0.0 && sigma_fine >= 0.0 && sigma_render >= 0.0 && modality_gap >= 0.0)) {
    fail(ErrorKind::kConfig, "noise levels must be non-negative");
  }
  if (image_blind_dims > std::min<std::size_t>(3, latent_dim)) {
    fail(ErrorKind::kConfig, "image_blind_dims must be <= min(3, latent_dim)");
  }
  fraction(repetition, "repetition");
  fraction(outlier_fraction, "outlier_fraction");
  fraction(mask_fraction, "mask_fraction");
  fraction(distractor_fraction, "distractor_fraction");
  if (std::lround(mask_fraction * static_cast<double>(patch_count())) >=
      static_cast<long>(patch_count())) {
    fail(ErrorKind::kConfig, "mask_fraction leaves no overlapping patch");
  }
}

SceneDecoders SceneDecoders::from_spec(const SceneSpec& spec) {
  Rng world(spec.world_seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  SceneDecoders d;
  d.image = random_normal({spec.feature_dim, spec.latent_dim}, world, scale);
  d.point = d.image + random_normal({spec.feature_dim, spec.latent_dim}, world,
                                    spec.modality_gap * scale);
  d.render = random_normal({3, spec.latent_dim}, world, scale);
  if (spec.image_blind_dims > 0) {
    for (std::size_t l = 0; l < spec.latent_dim; ++l) {
      const bool blind = l < spec.image_blind_dims;
      for (std::size_t k = 0; k < spec.feature_dim; ++k) {
        if (blind) d.image(k, l) = 0.0;
      }
      for (std::size_t k = 0; k < 3; ++k) {
        if (!blind) d.render(k, l) = 0.0;
      }
    }
  }
  return d;
}

RigidTransform random_rigid_transform(double rotation_max_deg, double translation_max_m,
                                      Rng& rng) {
  auto unit = [&rng]() {
    Eigen::Vector3d v;
    do {
      v = {rng.normal(), rng.normal(), rng.normal()};
    } while (v.norm() < 1e-9);
    return Eigen::Vector3d(v.normalized());
  };
  RigidTransform t;
  const double angle = rng.uniform(0.0, rotation_max_deg) * std::numbers::pi / 180.0;
  t.rotation = rotation_from_axis_angle(unit() * angle);
  t.translation = unit() * rng.uniform(0.0, translation_max_m);
  return t;
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.uniform_index(i)]);
  return p;
}

std::size_t rounded_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
}

}  // namespace

SyntheticPair generate_pair(const SceneSpec& spec, Rng& rng) {
  spec.validate();
  const SceneDecoders dec = SceneDecoders::from_spec(spec);
  const std::size_t np = spec.patch_count();
  const std::size_t c = spec.feature_dim, d = spec.latent_dim, cf = spec.fine_dim;
  const std::size_t h = spec.image_height(), w = spec.image_width();
  const double ps = spec.patch_size;

  SyntheticPair pair;
  pair.camera = spec.camera;
  pair.t_gt = random_rigid_transform(spec.rotation_max_deg, spec.translation_max_m, rng);

  // Latents, with clones for repetitive structure.
  Tensor latent = random_normal({np, d}, rng);
  const std::size_t n_clone = std::min(rounded_count(spec.repetition, np), np - 1);
  if (n_clone > 0) {
    const auto order = permutation(np, rng);
    const std::size_t n_source = np - n_clone;
    for (std::size_t i = 0; i < n_clone; ++i) {
      const std::size_t target = order[n_source + i];
      const std::size_t source = order[rng.uniform_index(n_source)];
      std::copy_n(latent.row(source).begin(), d, latent.row(target).begin());
      pair.cloned_patches.push_back(target);
    }
    std::sort(pair.cloned_patches.begin(), pair.cloned_patches.end());
  }
  std::vector<bool> masked(np, false);
  const std::size_t n_mask = rounded_count(spec.mask_fraction, np);
  if (n_mask > 0) {
    const auto order = permutation(np, rng);
    for (std::size_t i = 0; i < n_mask; ++i) masked[order[i]] = true;
    for (std::size_t p = 0; p < np; ++p) {
      if (masked[p]) pair.masked_patches.push_back(p);
    }
  }

  // Image side: coarse features, rendered pixels, patch geometry.
  pair.grid.patch_size = ps;
  pair.grid.grid_rows = spec.grid_rows;
  pair.grid.grid_cols = spec.grid_cols;
  pair.grid.features = matmul_nt(latent, dec.image) + random_normal({np, c}, rng, spec.sigma_feat);
  const Tensor colors = matmul_nt(latent, dec.render);  // np×3
  pair.image = Tensor({h, w, 3});
  pair.patch_depth.resize(np);
  for (std::size_t p = 0; p < np; ++p) {
    const std::size_t pr = p / spec.grid_cols, pc = p % spec.grid_cols;
    pair.grid.centers.push_back({(static_cast<double>(pc) + 0.5) * ps,
                                 (static_cast<double>(pr) + 0.5) * ps});
    pair.patch_depth[p] = rng.uniform(spec.depth_min, spec.depth_max);
  }
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t p = std::min(static_cast<std::size_t>(static_cast<double>(i) / ps),
                                     spec.grid_rows - 1) *
                                spec.grid_cols +
                            std::min(static_cast<std::size_t>(static_cast<double>(j) / ps),
                                     spec.grid_cols - 1);
      for (std::size_t k = 0; k < 3; ++k) {
        pair.image(i, j, k) = colors(p, k) + rng.normal(0.0, spec.sigma_render);
      }
    }
  }

  // Fine points: one pixel sample per point at its exact projection.
  const std::size_t n = spec.n_points;
  const std::size_t n_distract = rounded_count(spec.distractor_fraction, n);
  const RigidTransform to_cloud = pair.t_gt.inverse();
  Tensor fine_latent = random_normal({n, cf}, rng);
  if (spec.fine_codebook > 0) {
    Rng code_rng = Rng(spec.world_seed).derive(0xF17E);
    const Tensor codebook = random_normal({spec.fine_codebook, cf}, code_rng);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t code = (i / np) % spec.fine_codebook;
      std::copy_n(codebook.row(code).begin(), cf, fine_latent.row(i).begin());
    }
  }
  std::vector<std::size_t> point_patch(n);
  std::vector<Eigen::Vector3d> cam_points(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = i % np;
    const auto box = pair.grid.extent(p);
    const double u = rng.uniform(box[0], box[1]);
    const double v = rng.uniform(box[2], box[3]);
    const double z = pair.patch_depth[p] + rng.uniform(-spec.depth_jitter, spec.depth_jitter);
    point_patch[i] = p;
    cam_points[i] = {(u - spec.camera.cx) / spec.camera.fx * z,
                     (v - spec.camera.cy) / spec.camera.fy * z, z};
  }
  const std::size_t n_samples = n + n_distract;
  pair.pixels.features = Tensor({n_samples, cf});
  pair.pixels.uv.resize(n_samples);
  pair.pixels.patch.resize(n_samples);
  pair.pixel_points.resize(n_samples);
  for (std::size_t i = 0; i < n; ++i) {
    const Projection pr = project(cam_points[i], RigidTransform::identity(), spec.camera);
    if (!pr.valid) fail(ErrorKind::kNumerical, "generated point left the frustum");
    pair.pixels.uv[i] = {pr.uv.x(), pr.uv.y()};
    pair.pixels.patch[i] = point_patch[i];
    pair.pixel_points[i] = cam_points[i];
    for (std::size_t k = 0; k < cf; ++k) {
      pair.pixels.features(i, k) = fine_latent(i, k) + rng.normal(0.0, spec.sigma_fine);
    }
  }
  for (std::size_t s = n; s < n_samples; ++s) {
    const double u = rng.uniform(0.0, static_cast<double>(w));
    const double v = rng.uniform(0.0, static_cast<double>(h));
    const std::size_t p =
        std::min(static_cast<std::size_t>(v / ps), spec.grid_rows - 1) * spec.grid_cols +
        std::min(static_cast<std::size_t>(u / ps), spec.grid_cols - 1);
    const double z = pair.patch_depth[p];
    pair.pixels.uv[s] = {u, v};
    pair.pixels.patch[s] = p;
    pair.pixel_points[s] = {(u - spec.camera.cx) / spec.camera.fx * z,
                            (v - spec.camera.cy) / spec.camera.fy * z, z};
    for (std::size_t k = 0; k < cf; ++k) pair.pixels.features(s, k) = rng.normal();
  }

  // Point side: unmasked patches become superpoints.
  std::vector<std::size_t> superpoint_of_patch(np, np);
  for (std::size_t p = 0; p < np; ++p) {
    if (masked[p]) continue;
    superpoint_of_patch[p] = pair.superpoints.members.size();
    pair.superpoints.members.emplace_back();
  }
  const std::size_t n_super = pair.superpoints.members.size();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (!masked[point_patch[i]]) kept.push_back(i);
  }
  pair.points.features = Tensor({kept.size(), cf});
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const std::size_t i = kept[j];
    pair.cloud.push_back(to_cloud.apply(cam_points[i]));
    const auto& x = pair.cloud.back();
    pair.points.xyz.push_back({x.x(), x.y(), x.z()});
    for (std::size_t k = 0; k < cf; ++k) {
      pair.points.features(j, k) = fine_latent(i, k) + rng.normal(0.0, spec.sigma_fine);
    }
    pair.superpoints.members[superpoint_of_patch[point_patch[i]]].push_back(j);
    pair.gt_fine.emplace_back(i, j);
  }
  pair.superpoints.features = Tensor({n_super, c});
  const Tensor point_noise = random_normal({n_super, c}, rng, spec.sigma_feat);
  for (std::size_t p = 0; p < np; ++p) {
    const std::size_t s = superpoint_of_patch[p];
    if (s == np) continue;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (std::size_t j : pair.superpoints.members[s]) centroid += pair.cloud[j];
    centroid /= static_cast<double>(pair.superpoints.members[s].size());
    pair.superpoints.positions.push_back({centroid.x(), centroid.y(), centroid.z()});
    for (std::size_t k = 0; k < c; ++k) {
      double acc = point_noise(s, k);
      for (std::size_t l = 0; l < d; ++l) acc += dec.point(k, l) * latent(p, l);
      pair.superpoints.features(s, k) = acc;
    }
    pair.gt_coarse.push_back({p, s, 1.0});
  }
  return pair;
}

std::vector<bool> corrupt_correspondences(std::vector<Correspondence2D3D>& pairs,
                                          double fraction, double width, double height,
                                          Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    fail(ErrorKind::kConfig, "outlier fraction must lie in [0,1]");
  }
  const std::size_t count = rounded_count(fraction, pairs.size());
  const auto order = permutation(pairs.size(), rng);
  std::vector<bool> mask(pairs.size(), false);
  for (std::size_t i = 0; i < count; ++i) {
    mask[order[i]] = true;
    pairs[order[i]].pixel = {rng.uniform(0.0, width), rng.uniform(0.0, height)};
  }
  return mask;
}

PnpProblem generate_pnp_problem(std::size_t n, double noise_px, double outlier_fraction,
                                Rng& rng) {
  PnpProblem prob;
  prob.camera = {500.0, 500.0, 320.0, 240.0};
  prob.t_gt = random_rigid_transform(45.0, 1.0, rng);
  const RigidTransform to_cloud = prob.t_gt.inverse();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform(0.0, 640.0), v = rng.uniform(0.0, 480.0);
    const double z = rng.uniform(2.0, 6.0);
    const Eigen::Vector3d cam((u - prob.camera.cx) / prob.camera.fx * z,
                              (v - prob.camera.cy) / prob.camera.fy * z, z);
    prob.pairs.push_back({Eigen::Vector2d(u + rng.normal(0.0, noise_px),
                                          v + rng.normal(0.0, noise_px)),
                          to_cloud.apply(cam)});
  }
  prob.outliers = corrupt_correspondences(prob.pairs, outlier_fraction, 640.0, 480.0, rng);
  return prob;
}

PlantedQueryTask generate_planted_query_task(std::size_t m, std::size_t k, std::size_t c,
                                             Rng& rng) {
  if (k < 1 || k > m) fail(ErrorKind::kConfig, "planted task needs 1 <= k <= M");
  if (c < 2 || k > c) fail(ErrorKind::kConfig, "planted task needs k <= C and C >= 2");
  // Orthonormal basis of the shared k-dimensional subspace (Gram-Schmidt).
  Eigen::MatrixXd basis(c, k);
  for (std::size_t j = 0; j < k; ++j) {
    Eigen::VectorXd v(c);
    do {
      for (std::size_t i = 0; i < c; ++i) v(i) = rng.normal();
      for (std::size_t l = 0; l < j; ++l) v -= basis.col(l).dot(v) * basis.col(l);
    } while (v.norm() < 1e-6);
    basis.col(j) = v.normalized();
  }
  auto in_subspace = [&](double spread) {
    Eigen::VectorXd g(k);
    for (std::size_t j = 0; j < k; ++j) g(j) = rng.normal();
    g(0) = 0.0;
    return Eigen::VectorXd(basis.col(0) + spread * basis * g / std::sqrt(static_cast<double>(k)));
  };
  PlantedQueryTask task;
  const Eigen::VectorXd fi = in_subspace(0.3), fp = in_subspace(0.3);
  task.image_pooled = Tensor({c});
  task.point_pooled = Tensor({c});
  for (std::size_t i = 0; i < c; ++i) {
    task.image_pooled[i] = fi(i);
    task.point_pooled[i] = fp(i);
  }
  const auto order = permutation(m, rng);
  task.planted.assign(order.begin(), order.begin() + static_cast<long>(k));
  std::sort(task.planted.begin(), task.planted.end());
  std::vector<bool> is_planted(m, false);
  for (std::size_t i : task.planted) is_planted[i] = true;
  task.queries = Tensor({m, c});
  for (std::size_t q = 0; q < m; ++q) {
    auto row = task.queries.row(q);
    if (is_planted[q]) {
      // Redraw until the reward bound holds; the spread keeps this rare.
      for (;;) {
        const Eigen::VectorXd v = in_subspace(0.4);
        for (std::size_t i = 0; i < c; ++i) row[i] = v(i);
        const double r = 0.5 * (cosine_similarity(row, task.image_pooled.values()) +
                                cosine_similarity(row, task.point_pooled.values()));
        if (r >= 0.8) break;
      }
    } else {
      for (double& x : row) x = rng.normal();
    }
  }
  return task;
}

// ---------------------------------------------------------------------------
// Directory serialization

namespace {

std::string join(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

Tensor pixels_tensor(const std::vector<Pixel>& v) {
  Tensor t({std::max<std::size_t>(v.size(), 1), 2});
  for (std::size_t i = 0; i < v.size(); ++i) {
    t(i, 0) = v[i][0];
    t(i, 1) = v[i][1];
  }
  return t;
}

Tensor points_tensor(const std::vector<Eigen::Vector3d>& v) {
  Tensor t({std::max<std::size_t>(v.size(), 1), 3});
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (int k = 0; k < 3; ++k) t(i, static_cast<std::size_t>(k)) = v[i](k);
  }
  return t;
}

Tensor index_tensor(const std::vector<std::size_t>& v) {
  Tensor t({std::max<std::size_t>(v.size(), 1)});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<double>(v[i]);
  return t;
}

std::size_t as_index(double x) {
  if (!(x >= 0.0) || std::floor(x) != x) fail(ErrorKind::kFormat, "corrupt index value");
  return static_cast<std::size_t>(x);
}

std::vector<std::size_t> indices_of(const Tensor& t, std::size_t count) {
  if (count > t.size()) fail(ErrorKind::kFormat, "index tensor shorter than its manifest count");
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = as_index(t[i]);
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  return out;
}

}  // namespace

void write_pair(const std::string& dir, const SyntheticPair& pair) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir + ": " + ec.message());

  save_tensor(join(dir, "image.a2si"), pair.image);
  save_tensor(join(dir, "patch_features.a2si"), pair.grid.features);
  save_tensor(join(dir, "patch_depth.a2si"), Tensor({pair.patch_depth.size()}, pair.patch_depth));
  save_tensor(join(dir, "pixel_features.a2si"), pair.pixels.features);
  save_tensor(join(dir, "pixel_uv.a2si"), pixels_tensor(pair.pixels.uv));
  save_tensor(join(dir, "pixel_patch.a2si"), index_tensor(pair.pixels.patch));
  save_tensor(join(dir, "pixel_points.a2si"), points_tensor(pair.pixel_points));
  save_tensor(join(dir, "superpoint_features.a2si"), pair.superpoints.features);
  save_tensor(join(dir, "point_features.a2si"), pair.points.features);
  std::vector<std::size_t> owner(pair.cloud.size(), 0);
  for (std::size_t s = 0; s < pair.superpoints.members.size(); ++s) {
    for (std::size_t j : pair.superpoints.members[s]) owner[j] = s;
  }
  save_tensor(join(dir, "point_superpoint.a2si"), index_tensor(owner));
  std::vector<std::size_t> coarse_flat, fine_flat;
  for (const auto& m : pair.gt_coarse) {
    coarse_flat.push_back(m.patch);
    coarse_flat.push_back(m.superpoint);
  }
  for (const auto& [s, p] : pair.gt_fine) {
    fine_flat.push_back(s);
    fine_flat.push_back(p);
  }
  save_tensor(join(dir, "gt_coarse.a2si"), index_tensor(coarse_flat));
  save_tensor(join(dir, "gt_fine.a2si"), index_tensor(fine_flat));

  {
    auto out = open_out(join(dir, "cloud.xyz"));
    out.precision(17);
    for (const auto& x : pair.cloud) out << x.x() << ' ' << x.y() << ' ' << x.z() << '\n';
  }
  {
    auto out = open_out(join(dir, "gt_pose.txt"));
    write_transform(out, pair.t_gt);
  }
  auto out = open_out(join(dir, "manifest.txt"));
  out.precision(17);
  auto list = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  out << "id = " << pair.id << '\n'
      << "fx = " << pair.camera.fx << '\n'
      << "fy = " << pair.camera.fy << '\n'
      << "cx = " << pair.camera.cx << '\n'
      << "cy = " << pair.camera.cy << '\n'
      << "grid_rows = " << pair.grid.grid_rows << '\n'
      << "grid_cols = " << pair.grid.grid_cols << '\n'
      << "patch_size = " << pair.grid.patch_size << '\n'
      << "pixel_samples = " << pair.pixels.uv.size() << '\n'
      << "points = " << pair.cloud.size() << '\n'
      << "superpoints = " << pair.superpoints.members.size() << '\n'
      << "gt_coarse = " << pair.gt_coarse.size() << '\n'
      << "gt_fine = " << pair.gt_fine.size() << '\n'
      << "cloned_patches = " << list(pair.cloned_patches) << '\n'
      << "masked_patches = " << list(pair.masked_patches) << '\n';
  if (!out) fail(ErrorKind::kIo, "failed writing " + join(dir, "manifest.txt"));
}

SyntheticPair read_pair(const std::string& dir) {
  const std::string manifest_path = join(dir, "manifest.txt");
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::kIo, "cannot read " + manifest_path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorKind::kFormat, manifest_path + " lacks key " + key);
    return it->second;
  };
  auto num = [&](const char* key) {
    try {
      return std::stod(get(key));
    } catch (const std::logic_error&) {
      fail(ErrorKind::kFormat, manifest_path + ": bad number for " + key);
    }
  };
  auto count = [&](const char* key) { return as_index(num(key)); };
  auto list = [&](const char* key) {
    std::vector<std::size_t> v;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) v.push_back(as_index(std::stod(item)));
    }
    return v;
  };

  SyntheticPair pair;
  pair.id = get("id");
  pair.camera = {num("fx"), num("fy"), num("cx"), num("cy")};
  pair.grid.grid_rows = count("grid_rows");
  pair.grid.grid_cols = count("grid_cols");
  pair.grid.patch_size = num("patch_size");
  pair.cloned_patches = list("cloned_patches");
  pair.masked_patches = list("masked_patches");
  const std::size_t n_samples = count("pixel_samples"), n_points = count("points");
  const std::size_t n_super = count("superpoints");

  pair.image = load_tensor(join(dir, "image.a2si"));
  pair.grid.features = load_tensor(join(dir, "patch_features.a2si"));
  const std::size_t np = pair.grid.grid_rows * pair.grid.grid_cols;
  if (pair.grid.features.rank() != 2 || pair.grid.features.rows() != np) {
    fail(ErrorKind::kFormat, dir + ": patch features disagree with the grid");
  }
  for (std::size_t p = 0; p < np; ++p) {
    pair.grid.centers.push_back(
        {(static_cast<double>(p % pair.grid.grid_cols) + 0.5) * pair.grid.patch_size,
         (static_cast<double>(p / pair.grid.grid_cols) + 0.5) * pair.grid.patch_size});
  }
  const Tensor depth = load_tensor(join(dir, "patch_depth.a2si"));
  pair.patch_depth.assign(depth.values().begin(), depth.values().end());

  pair.pixels.features = load_tensor(join(dir, "pixel_features.a2si"));
  const Tensor uv = load_tensor(join(dir, "pixel_uv.a2si"));
  pair.pixels.patch = indices_of(load_tensor(join(dir, "pixel_patch.a2si")), n_samples);
  const Tensor pix_pts = load_tensor(join(dir, "pixel_points.a2si"));
  if (uv.size() < 2 * n_samples || pix_pts.size() < 3 * n_samples) {
    fail(ErrorKind::kFormat, dir + ": pixel sample tensors are truncated");
  }
  for (std::size_t s = 0; s < n_samples; ++s) {
    pair.pixels.uv.push_back({uv(s, 0), uv(s, 1)});
    pair.pixel_points.emplace_back(pix_pts(s, 0), pix_pts(s, 1), pix_pts(s, 2));
  }

  pair.superpoints.features = load_tensor(join(dir, "superpoint_features.a2si"));
  pair.points.features = load_tensor(join(dir, "point_features.a2si"));
  const auto owner = indices_of(load_tensor(join(dir, "point_superpoint.a2si")), n_points);
  {
    const std::string path = join(dir, "cloud.xyz");
    std::ifstream xyz(path);
    if (!xyz) fail(ErrorKind::kIo, "cannot read " + path);
    double x, y, z;
    while (xyz >> x >> y >> z) pair.cloud.emplace_back(x, y, z);
    if (!xyz.eof()) fail(ErrorKind::kFormat, path + " holds a malformed line");
    if (pair.cloud.size() != n_points) {
      fail(ErrorKind::kFormat, path + " point count disagrees with the manifest");
    }
  }
  pair.superpoints.members.resize(n_super);
  for (std::size_t j = 0; j < n_points; ++j) {
    if (owner[j] >= n_super) fail(ErrorKind::kFormat, dir + ": superpoint index out of range");
    pair.superpoints.members[owner[j]].push_back(j);
    const auto& x = pair.cloud[j];
    pair.points.xyz.push_back({x.x(), x.y(), x.z()});
  }
  for (const auto& members : pair.superpoints.members) {
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (std::size_t j : members) centroid += pair.cloud[j];
    if (!members.empty()) centroid /= static_cast<double>(members.size());
    pair.superpoints.positions.push_back({centroid.x(), centroid.y(), centroid.z()});
  }
  {
    const std::string path = join(dir, "gt_pose.txt");
    std::ifstream pose(path);
    if (!pose) fail(ErrorKind::kIo, "cannot read " + path);
    const auto poses = read_transforms(pose);
    if (poses.size() != 1) fail(ErrorKind::kFormat, path + " must hold one pose");
    pair.t_gt = poses[0];
  }
  const auto coarse = indices_of(load_tensor(join(dir, "gt_coarse.a2si")), 2 * count("gt_coarse"));
  for (std::size_t i = 0; i + 1 < coarse.size(); i += 2) {
    pair.gt_coarse.push_back({coarse[i], coarse[i + 1], 1.0});
  }
  const auto fine = indices_of(load_tensor(join(dir, "gt_fine.a2si")), 2 * count("gt_fine"));
  for (std::size_t i = 0; i + 1 < fine.size(); i += 2) pair.gt_fine.emplace_back(fine[i], fine[i + 1]);
  return pair;
}

}  // namespace agentreg
