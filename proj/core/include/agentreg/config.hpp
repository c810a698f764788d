#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "agentreg/agents.hpp"
#include "agentreg/eval.hpp"
#include "agentreg/losses.hpp"
#include "agentreg/matching.hpp"
#include "agentreg/pose.hpp"
#include "agentreg/synth.hpp"

namespace agentreg {

/// Ablation grid columns. Without RAI the selection flags have no effect.
struct VariantFlags {
  bool phase = true;
  bool rai = true;
  bool tri = true;
  bool topk = false;

  bool operator==(const VariantFlags&) const = default;
};

/// M1..M8 of the ablation grid.
VariantFlags variant_by_name(const std::string& name);
std::string variant_name(const VariantFlags& flags);

/// The default synthetic benchmark: part of the latent is visible to the
/// image side only through the rendered colours, and fine descriptors repeat
/// across patches.
SceneSpec benchmark_scene();

struct ExperimentConfig {
  RewardConfig reward;
  LossParams loss;
  MatchingConfig matching;
  // 1 px threshold for the 32 px benchmark images.
  RansacConfig ransac{1.0, 5000, 0.999, 6};
  MetricThresholds metrics;
  SceneSpec scene = benchmark_scene();

  std::size_t k = 12;
  std::size_t pool_size = 32;  // M; variants without selection use k queries
  std::size_t layers = 3;
  std::size_t ffn_hidden = 32;
  std::size_t adaptor_hidden = 32;
  double init_scale = 0.5;

  std::size_t n_train = 24;
  std::size_t n_val = 4;
  std::size_t n_test = 16;

  int epochs = 40;
  double learning_rate = 0.3;
  double score_learning_rate = 0.5;

  VariantFlags variant;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> ablation_seeds{1, 2, 3};

  void validate() const;
};

/// Flat "key = value" text; '#' starts a comment. Unknown keys, repeated keys
/// and malformed values raise kConfig with the line number.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);
/// Every key in a fixed order; parse_config(write_config(c)) == c.
void write_config(std::ostream& out, const ExperimentConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace agentreg
