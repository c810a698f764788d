#pragma once

// Redundant query pool and the three-stage agent selection schedule.
// The reward-guided stage trains the scores with REINFORCE plus an entropy bonus.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "agentreg/numerics.hpp"

namespace agentreg {

enum class Stage { kWarmUp, kRewardsGuided, kFinal };

const char* to_string(Stage stage);
Stage stage_from_string(const std::string& name);

struct RewardConfig {
  double tau0 = 20.0;
  double tau_decay = 0.9;
  int tau_decay_every = 10;
  double tau_min = 5.0;
  double beta_mask = 0.3;
  double mu_entropy = 0.01;
  int stage1_epochs = 15;
  int stage2_period = 5;
  double eps_loss = 1e-6;

  /// Throws kConfig when an invariant is broken.
  void validate() const;
  bool operator==(const RewardConfig&) const = default;
};

struct QueryPool {
  Tensor queries;              // M×C learnable queries
  std::vector<double> scores;  // S_q, one per query
  std::size_t k = 1;
  Stage stage = Stage::kWarmUp;

  /// Scores start at zero (p = 0.5 for every query).
  QueryPool(Tensor queries, std::size_t k);

  std::size_t size() const { return scores.size(); }
  std::vector<double> probabilities() const;
  void validate() const;
};

/// Indices of the k largest scores, ties to the lower index, in descending
/// score order.
std::vector<std::size_t> top_k_by_score(std::span<const double> scores,
                                        std::size_t k);

/// Stage I selection. `aggregated` holds the pool's Q_A rows (M×C).
std::vector<std::size_t> warmup_topk(const QueryPool& pool,
                                     const Tensor& aggregated);

/// Stage III selection of the deployed agents.
std::vector<std::size_t> final_select(const QueryPool& pool);

/// ½[cos(F_q, F_i) + cos(F_q, F_p)]; a zero-norm operand contributes 0.
double local_reward(std::span<const double> query,
                    std::span<const double> image_pooled,
                    std::span<const double> point_pooled);

double global_reward(double task_loss, double eps_loss = 1e-6);

/// α = 1 - exp(-epoch/τ).
double fusion_alpha(int epoch, double tau);

double fused_reward(double local, double global, double alpha);

/// τ0·decay^⌊epoch/every⌋, floored at τ_min.
double decay_tau(const RewardConfig& cfg, int epoch);

/// Stage for a 1-based epoch; epochs past `total_epochs` are kFinal.
Stage stage_of_epoch(int epoch, const RewardConfig& cfg, int total_epochs);

double soft_mask(int action, double beta) noexcept;
/// a·ln p + (1-a)·ln(1-p), with p clamped away from 0 and 1.
double log_prob(int action, double p) noexcept;
double bernoulli_entropy(double p) noexcept;

struct SelectionOutcome {
  std::vector<int> actions;
  std::vector<double> soft_masks;
  std::vector<double> log_probs;
  std::vector<double> probabilities;
  std::vector<double> rewards;
  double baseline = 0.0;

  std::size_t selected_count() const;
  std::vector<std::size_t> selected() const;
};

/// a_i ~ Bernoulli(sigmoid(S_i)) independently; if nothing is sampled the
/// most probable query (lowest index on ties) is switched on.
SelectionOutcome sample_actions(const QueryPool& pool, Rng& rng, double beta);

/// Writes per-query rewards into the outcome. A sampled query earns
/// α·local_i + (1-α)·global; a query left out earns nothing. The baseline is
/// the mean over all M entries.
void assign_rewards(SelectionOutcome& outcome, std::span<const double> local,
                    double global, double alpha);

struct PolicyLoss {
  double value = 0.0;
  std::vector<double> grad_scores;
  /// Set when fewer than two queries exist and the baseline absorbs the reward.
  bool degenerate_baseline = false;
};

/// L_g = -Σ_i (r_i - r̄)·log P(a_i) at fixed actions, with the gradient
/// -(r_i - r̄)(a_i - p_i) with respect to each score.
PolicyLoss reinforce_loss(const SelectionOutcome& outcome,
                          std::span<const double> scores);

struct EntropyTerm {
  double total = 0.0;             // Σ entropy
  std::vector<double> grad_scores;  // ∂Σ entropy / ∂S
};

EntropyTerm entropy_bonus(std::span<const double> scores);

/// L_full = L_g - μ·Σ entropy, with its score gradient.
PolicyLoss full_policy_loss(const SelectionOutcome& outcome,
                            std::span<const double> scores, double mu);

}  // namespace agentreg
