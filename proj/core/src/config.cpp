#include "agentreg/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <variant>

#include "agentreg/error.hpp"

namespace agentreg {

SceneSpec benchmark_scene() {
  SceneSpec s;
  s.latent_dim = 5;
  s.image_blind_dims = 3;
  s.sigma_feat = 0.5;
  s.fine_codebook = 8;
  return s;
}

VariantFlags variant_by_name(const std::string& name) {
  // M1 baseline, M2 phase, M3 RAI, M4 RAI+topk, M5 RAI+tri,
  // M6 phase+RAI, M7 phase+RAI+topk, M8 phase+RAI+tri.
  if (name == "M1") return {false, false, false, false};
  if (name == "M2") return {true, false, false, false};
  if (name == "M3") return {false, true, false, false};
  if (name == "M4") return {false, true, false, true};
  if (name == "M5") return {false, true, true, false};
  if (name == "M6") return {true, true, false, false};
  if (name == "M7") return {true, true, false, true};
  if (name == "M8") return {true, true, true, false};
  fail(ErrorKind::kConfig, "unknown variant '" + name + "' (expected M1..M8)");
}

std::string variant_name(const VariantFlags& flags) {
  for (const char* n : {"M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8"}) {
    if (variant_by_name(n) == flags) return n;
  }
  std::string s = "custom(";
  s += flags.phase ? "phase" : "-";
  s += flags.rai ? ",rai" : ",-";
  s += flags.tri ? ",tri" : ",-";
  s += flags.topk ? ",topk)" : ",-)";
  return s;
}

void ExperimentConfig::validate() const {
  reward.validate();
  loss.validate();
  matching.validate();
  ransac.validate();
  metrics.validate();
  scene.validate();
  if (k < 1) fail(ErrorKind::kConfig, "k must be >= 1");
  if (pool_size < k) fail(ErrorKind::kConfig, "pool_size (M) must be >= k");
  if (layers < 1) fail(ErrorKind::kConfig, "layers must be >= 1");
  if (ffn_hidden < 1 || adaptor_hidden < 1) fail(ErrorKind::kConfig, "hidden sizes must be >= 1");
  if (!(init_scale > 0.0)) fail(ErrorKind::kConfig, "init_scale must be positive");
  if (epochs < 1) fail(ErrorKind::kConfig, "epochs must be >= 1");
  if (!(learning_rate > 0.0) || !(score_learning_rate > 0.0)) {
    fail(ErrorKind::kConfig, "learning rates must be positive");
  }
  if (variant.tri && variant.topk) fail(ErrorKind::kConfig, "variant cannot set both tri and topk");
  if (ablation_seeds.empty()) fail(ErrorKind::kConfig, "ablation_seeds must not be empty");
}

namespace {

// Seeds and counts share one slot type.
static_assert(std::is_same_v<std::size_t, std::uint64_t>);
using Slot = std::variant<double*, std::size_t*, int*, bool*, std::vector<std::uint64_t>*>;

struct Field {
  const char* key;
  Slot slot;
};

std::vector<Field> fields(ExperimentConfig& c) {
  return {
      {"seed", &c.seed},
      {"epochs", &c.epochs},
      {"learning_rate", &c.learning_rate},
      {"score_learning_rate", &c.score_learning_rate},
      {"variant.phase", &c.variant.phase},
      {"variant.rai", &c.variant.rai},
      {"variant.tri", &c.variant.tri},
      {"variant.topk", &c.variant.topk},
      {"ablation_seeds", &c.ablation_seeds},
      {"k", &c.k},
      {"pool_size", &c.pool_size},
      {"layers", &c.layers},
      {"ffn_hidden", &c.ffn_hidden},
      {"adaptor_hidden", &c.adaptor_hidden},
      {"init_scale", &c.init_scale},
      {"reward.tau0", &c.reward.tau0},
      {"reward.tau_decay", &c.reward.tau_decay},
      {"reward.tau_decay_every", &c.reward.tau_decay_every},
      {"reward.tau_min", &c.reward.tau_min},
      {"reward.beta_mask", &c.reward.beta_mask},
      {"reward.mu_entropy", &c.reward.mu_entropy},
      {"reward.stage1_epochs", &c.reward.stage1_epochs},
      {"reward.stage2_period", &c.reward.stage2_period},
      {"reward.eps_loss", &c.reward.eps_loss},
      {"loss.gamma", &c.loss.gamma},
      {"loss.delta_p", &c.loss.delta_p},
      {"loss.delta_n", &c.loss.delta_n},
      {"loss.lambda1", &c.loss.lambda1},
      {"loss.lambda2", &c.loss.lambda2},
      {"matching.top_c", &c.matching.top_c},
      {"matching.s_min", &c.matching.s_min},
      {"matching.s_fine", &c.matching.s_fine},
      {"ransac.threshold_px", &c.ransac.threshold_px},
      {"ransac.max_iters", &c.ransac.max_iters},
      {"ransac.confidence", &c.ransac.confidence},
      {"ransac.min_sample", &c.ransac.min_sample},
      {"metrics.inlier_m", &c.metrics.inlier_m},
      {"metrics.fmr_tau", &c.metrics.fmr_tau},
      {"metrics.rmse_m", &c.metrics.rmse_m},
      {"metrics.patch_overlap", &c.metrics.patch_overlap},
      {"data.n_train", &c.n_train},
      {"data.n_val", &c.n_val},
      {"data.n_test", &c.n_test},
      {"scene.grid_rows", &c.scene.grid_rows},
      {"scene.grid_cols", &c.scene.grid_cols},
      {"scene.patch_size", &c.scene.patch_size},
      {"scene.n_points", &c.scene.n_points},
      {"scene.fx", &c.scene.camera.fx},
      {"scene.fy", &c.scene.camera.fy},
      {"scene.cx", &c.scene.camera.cx},
      {"scene.cy", &c.scene.camera.cy},
      {"scene.depth_min", &c.scene.depth_min},
      {"scene.depth_max", &c.scene.depth_max},
      {"scene.depth_jitter", &c.scene.depth_jitter},
      {"scene.rotation_max_deg", &c.scene.rotation_max_deg},
      {"scene.translation_max_m", &c.scene.translation_max_m},
      {"scene.feature_dim", &c.scene.feature_dim},
      {"scene.latent_dim", &c.scene.latent_dim},
      {"scene.fine_dim", &c.scene.fine_dim},
      {"scene.sigma_feat", &c.scene.sigma_feat},
      {"scene.sigma_fine", &c.scene.sigma_fine},
      {"scene.sigma_render", &c.scene.sigma_render},
      {"scene.modality_gap", &c.scene.modality_gap},
      {"scene.repetition", &c.scene.repetition},
      {"scene.outlier_fraction", &c.scene.outlier_fraction},
      {"scene.mask_fraction", &c.scene.mask_fraction},
      {"scene.distractor_fraction", &c.scene.distractor_fraction},
      {"scene.fine_codebook", &c.scene.fine_codebook},
      {"scene.image_blind_dims", &c.scene.image_blind_dims},
      {"scene.world_seed", &c.scene.world_seed},
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_integer(const std::string& v, T& out) {
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  return r.ec == std::errc() && r.ptr == end;
}

bool parse_double(const std::string& v, double& out) {
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  return r.ec == std::errc() && r.ptr == end;
}

std::string format_double(double x) {
  std::ostringstream ss;
  ss.precision(17);
  ss << x;
  return ss.str();
}

}  // namespace

std::vector<std::string> config_keys() {
  ExperimentConfig c;
  std::vector<std::string> keys;
  for (const auto& f : fields(c)) keys.emplace_back(f.key);
  return keys;
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  const auto table = fields(cfg);
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kConfig, where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : table) {
      if (key == f.key) field = &f;
    }
    if (!field) fail(ErrorKind::kConfig, where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) fail(ErrorKind::kConfig, where + ": repeated key '" + key + "'");
    const std::string bad = where + ": bad value '" + value + "' for " + key;
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, double>) {
            if (!parse_double(value, *p)) fail(ErrorKind::kConfig, bad);
          } else if constexpr (std::is_same_v<T, bool>) {
            if (value == "true" || value == "1") {
              *p = true;
            } else if (value == "false" || value == "0") {
              *p = false;
            } else {
              fail(ErrorKind::kConfig, bad);
            }
          } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
            p->clear();
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) {
              std::uint64_t x = 0;
              if (!parse_integer(trim(item), x)) fail(ErrorKind::kConfig, bad);
              p->push_back(x);
            }
          } else {
            if (!parse_integer(value, *p)) fail(ErrorKind::kConfig, bad);
          }
        },
        field->slot);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read config " + path);
  return parse_config(in, path);
}

void write_config(std::ostream& out, const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  for (const auto& f : fields(copy)) {
    out << f.key << " = ";
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, double>) {
            out << format_double(*p);
          } else if constexpr (std::is_same_v<T, bool>) {
            out << (*p ? "true" : "false");
          } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
            for (std::size_t i = 0; i < p->size(); ++i) out << (i ? "," : "") << (*p)[i];
          } else {
            out << *p;
          }
        },
        f.slot);
    out << '\n';
  }
}

}  // namespace agentreg
