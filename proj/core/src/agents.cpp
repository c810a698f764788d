#include "agentreg/agents.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "agentreg/error.hpp"

namespace agentreg {

namespace {

constexpr double kProbClamp = 1e-12;

double clamp_prob(double p) noexcept {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

double safe_cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

}  // namespace

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::kWarmUp: return "warmup";
    case Stage::kRewardsGuided: return "rewards";
    case Stage::kFinal: return "final";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& name) {
  if (name == "warmup") return Stage::kWarmUp;
  if (name == "rewards") return Stage::kRewardsGuided;
  if (name == "final") return Stage::kFinal;
  fail(ErrorKind::kFormat, "unknown stage '" + name + "'");
}

void RewardConfig::validate() const {
  if (!(tau_min > 0.0) || !(tau0 >= tau_min)) {
    fail(ErrorKind::kConfig, "reward config requires tau0 >= tau_min > 0");
  }
  if (!(tau_decay > 0.0 && tau_decay <= 1.0) || tau_decay_every < 1) {
    fail(ErrorKind::kConfig, "tau decay must be in (0,1] applied every >= 1 epochs");
  }
  if (!(beta_mask >= 0.0 && beta_mask < 1.0)) {
    fail(ErrorKind::kConfig, "beta_mask must lie in [0,1)");
  }
  if (!(mu_entropy >= 0.0)) fail(ErrorKind::kConfig, "mu_entropy must be >= 0");
  if (stage1_epochs < 0 || stage2_period < 1) {
    fail(ErrorKind::kConfig, "stage schedule needs stage1_epochs >= 0, stage2_period >= 1");
  }
  if (!(eps_loss > 0.0)) fail(ErrorKind::kConfig, "eps_loss must be positive");
}

QueryPool::QueryPool(Tensor q, std::size_t k_agents)
    : queries(std::move(q)), scores(queries.rank() == 2 ? queries.rows() : 0, 0.0),
      k(k_agents) {
  validate();
}

std::vector<double> QueryPool::probabilities() const {
  std::vector<double> p(scores.size());
  std::transform(scores.begin(), scores.end(), p.begin(), sigmoid);
  return p;
}

void QueryPool::validate() const {
  if (queries.rank() != 2) fail(ErrorKind::kDimension, "query pool must be M×C");
  if (scores.size() != queries.rows()) {
    fail(ErrorKind::kDimension, "one score per query is required");
  }
  if (k < 1 || k > scores.size()) {
    fail(ErrorKind::kConfig, "query pool needs M >= k >= 1 (M=" +
                                 std::to_string(scores.size()) +
                                 ", k=" + std::to_string(k) + ")");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) fail(ErrorKind::kNumerical, "non-finite query score");
  }
}

std::vector<std::size_t> top_k_by_score(std::span<const double> scores,
                                        std::size_t k) {
  if (k > scores.size()) {
    fail(ErrorKind::kConfig, "top-k with k=" + std::to_string(k) + " > M=" +
                                 std::to_string(scores.size()));
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> warmup_topk(const QueryPool& pool,
                                     const Tensor& aggregated) {
  if (pool.stage != Stage::kWarmUp) {
    fail(ErrorKind::kContract, "warmup_topk called outside the warm-up stage");
  }
  if (aggregated.rank() != 2 || aggregated.rows() != pool.size()) {
    fail(ErrorKind::kDimension, "aggregated queries must have one row per pool entry");
  }
  return top_k_by_score(pool.scores, pool.k);
}

std::vector<std::size_t> final_select(const QueryPool& pool) {
  return top_k_by_score(pool.scores, pool.k);
}

double local_reward(std::span<const double> query,
                    std::span<const double> image_pooled,
                    std::span<const double> point_pooled) {
  return 0.5 * (safe_cosine(query, image_pooled) + safe_cosine(query, point_pooled));
}

double global_reward(double task_loss, double eps_loss) {
  if (task_loss < 0.0 || std::isnan(task_loss)) {
    fail(ErrorKind::kContract, "global reward needs a non-negative task loss");
  }
  return 1.0 / std::max(task_loss, eps_loss);
}

double fusion_alpha(int epoch, double tau) {
  if (epoch < 0 || !(tau > 0.0)) {
    fail(ErrorKind::kContract, "fusion_alpha needs epoch >= 0 and tau > 0");
  }
  return 1.0 - std::exp(-static_cast<double>(epoch) / tau);
}

double fused_reward(double local, double global, double alpha) {
  return alpha * local + (1.0 - alpha) * global;
}

double decay_tau(const RewardConfig& cfg, int epoch) {
  const int steps = std::max(epoch, 0) / cfg.tau_decay_every;
  return std::max(cfg.tau_min, cfg.tau0 * std::pow(cfg.tau_decay, steps));
}

Stage stage_of_epoch(int epoch, const RewardConfig& cfg, int total_epochs) {
  if (epoch < 1) fail(ErrorKind::kContract, "epochs are 1-based");
  if (epoch > total_epochs) return Stage::kFinal;
  if (epoch <= cfg.stage1_epochs) return Stage::kWarmUp;
  return epoch % cfg.stage2_period == 0 ? Stage::kRewardsGuided : Stage::kWarmUp;
}

double soft_mask(int action, double beta) noexcept {
  return action ? 1.0 : beta;
}

double log_prob(int action, double p) noexcept {
  const double q = clamp_prob(p);
  return action ? std::log(q) : std::log(1.0 - q);
}

double bernoulli_entropy(double p) noexcept {
  const double q = clamp_prob(p);
  return -(q * std::log(q) + (1.0 - q) * std::log(1.0 - q));
}

std::size_t SelectionOutcome::selected_count() const {
  return static_cast<std::size_t>(std::count(actions.begin(), actions.end(), 1));
}

std::vector<std::size_t> SelectionOutcome::selected() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i]) out.push_back(i);
  }
  return out;
}

SelectionOutcome sample_actions(const QueryPool& pool, Rng& rng, double beta) {
  if (pool.stage != Stage::kRewardsGuided) {
    fail(ErrorKind::kContract, "sample_actions called outside the rewards-guided stage");
  }
  const std::size_t m = pool.size();
  SelectionOutcome out;
  out.probabilities = pool.probabilities();
  out.actions.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.actions[i] = rng.bernoulli(out.probabilities[i]) ? 1 : 0;
  }
  if (out.selected_count() == 0) {
    const auto best = std::max_element(out.probabilities.begin(), out.probabilities.end());
    out.actions[static_cast<std::size_t>(best - out.probabilities.begin())] = 1;
  }
  out.soft_masks.resize(m);
  out.log_probs.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.soft_masks[i] = soft_mask(out.actions[i], beta);
    out.log_probs[i] = log_prob(out.actions[i], out.probabilities[i]);
  }
  out.rewards.assign(m, 0.0);
  return out;
}

void assign_rewards(SelectionOutcome& outcome, std::span<const double> local,
                    double global, double alpha) {
  const std::size_t m = outcome.actions.size();
  if (local.size() != m) fail(ErrorKind::kDimension, "one local reward per query");
  outcome.rewards.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (outcome.actions[i]) outcome.rewards[i] = fused_reward(local[i], global, alpha);
  }
  outcome.baseline =
      std::accumulate(outcome.rewards.begin(), outcome.rewards.end(), 0.0) /
      static_cast<double>(m);
}

PolicyLoss reinforce_loss(const SelectionOutcome& outcome,
                          std::span<const double> scores) {
  const std::size_t m = outcome.actions.size();
  if (scores.size() != m || outcome.rewards.size() != m) {
    fail(ErrorKind::kDimension, "reinforce_loss: outcome and scores disagree in length");
  }
  PolicyLoss out;
  out.grad_scores.assign(m, 0.0);
  if (m < 2) {
    out.degenerate_baseline = true;
    return out;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double p = sigmoid(scores[i]);
    const double advantage = outcome.rewards[i] - outcome.baseline;
    out.value -= advantage * log_prob(outcome.actions[i], p);
    out.grad_scores[i] = -advantage * (static_cast<double>(outcome.actions[i]) - p);
  }
  return out;
}

EntropyTerm entropy_bonus(std::span<const double> scores) {
  EntropyTerm out;
  out.grad_scores.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = sigmoid(scores[i]);
    out.total += bernoulli_entropy(p);
    const double q = clamp_prob(p);
    // dH/dp = ln((1-p)/p), dp/dS = p(1-p)
    out.grad_scores[i] = std::log((1.0 - q) / q) * p * (1.0 - p);
  }
  return out;
}

PolicyLoss full_policy_loss(const SelectionOutcome& outcome,
                            std::span<const double> scores, double mu) {
  PolicyLoss out = reinforce_loss(outcome, scores);
  const EntropyTerm h = entropy_bonus(scores);
  out.value -= mu * h.total;
  for (std::size_t i = 0; i < scores.size(); ++i) out.grad_scores[i] -= mu * h.grad_scores[i];
  return out;
}

}  // namespace agentreg
