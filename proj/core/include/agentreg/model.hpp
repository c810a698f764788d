#pragma once

// The trainable registration model. Linear feature heads stand in for the
// backbones; a learned 3×C lift maps superpoint positions into feature space.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "agentreg/agents.hpp"
#include "agentreg/attention.hpp"
#include "agentreg/config.hpp"
#include "agentreg/losses.hpp"
#include "agentreg/phase.hpp"
#include "agentreg/synth.hpp"

namespace agentreg {

/// Per-pair inputs that never change during training.
struct PreparedPair {
  const SyntheticPair* pair = nullptr;
  PhaseMap phase;
  Tensor image_pos;     // P_i×C sinusoidal encoding of patch centers
  Tensor point_coords;  // P_p×3 superpoint positions, centered
  std::vector<PairLabel> labels;  // P_i×P_p coarse labels
  double fine_loss = 0.0;         // fine descriptors are fixed
};

PreparedPair prepare_pair(const SyntheticPair& pair, const LossParams& loss,
                          bool with_phase);

struct Model {
  VariantFlags variant;
  Tensor head_image;  // C×C
  Tensor head_point;  // C×C
  ConvStackWeights adaptor;
  QueryPool pool;
  AttentionWeights attention;
  Tensor point_lift;  // 3×C
  int epoch = 0;      // completed training epochs
  RewardConfig reward;
  std::uint64_t train_rng_counter = 0;  // position of the training stream

  static Model init(const ExperimentConfig& cfg, Rng& rng);

  std::size_t channels() const { return head_image.rows(); }
  bool selects() const { return variant.rai && (variant.tri || variant.topk); }
  /// Deployed agents: top-k by score for selecting variants, all otherwise.
  std::vector<std::size_t> deployed_agents() const;
};

struct ForwardState {
  Stage stage = Stage::kFinal;
  Tensor image_base, point_base;  // F_i, F_p before interaction
  Tensor image_out, point_out;    // F_i', F_p'
  Tensor aggregated;              // Q_A
  std::vector<std::size_t> active;
  std::vector<double> masks;
  bool gated = false;  // masks are sigmoid(score)
  std::optional<SelectionOutcome> outcome;
  ConvStackCache adaptor_cache;
  IasCache ias_cache;
  RaiCache rai_cache;
  Tensor point_pos;
};

/// Stage decides the agent path: warm-up and final use top-k with sigmoid
/// gates, reward-guided samples every query with soft masks (needs rng).
ForwardState forward(const Model& model, const PreparedPair& in, Stage stage,
                     Rng* rng = nullptr, double beta_mask = 0.3);

struct ModelGrads {
  Tensor head_image, head_point;
  ConvStackGrads adaptor;
  Tensor queries;
  std::vector<double> scores;
  std::vector<AttentionLayerWeights> layers;
  RaiWeights rai;
  Tensor point_lift;
};

ModelGrads backward(const Model& model, const PreparedPair& in, const ForwardState& state,
                    const Tensor& grad_image_out, const Tensor& grad_point_out);

struct StepStats {
  Stage stage = Stage::kWarmUp;
  double coarse_loss = 0.0;
  double task_loss = 0.0;  // L_t = coarse + fine
  std::optional<double> policy_loss;
  double total = 0.0;
  double alpha = 0.0;
  double tau = 0.0;
};

/// One gradient-descent update on a single pair.
StepStats train_step(Model& model, const PreparedPair& in, const ExperimentConfig& cfg,
                     Stage stage, int epoch, Rng& rng);

/// Checkpoint: text header, then named binary tensors.
void save_checkpoint(std::ostream& out, const Model& model);
Model load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace agentreg
