#include "agentreg/planted.hpp"

#include <algorithm>
#include <cmath>

#include "agentreg/error.hpp"

namespace agentreg {

void PlantedScheduleConfig::validate() const {
  reward.validate();
  if (k < 1) fail(ErrorKind::kConfig, "k must be >= 1");
  if (epochs < 1 || steps_per_epoch < 1) {
    fail(ErrorKind::kConfig, "epochs and steps_per_epoch must be >= 1");
  }
  if (!(score_lr > 0.0)) fail(ErrorKind::kConfig, "score_lr must be positive");
}

namespace {

// d cos(a, b) / d a, zero when either side vanishes.
void add_cosine_grad(std::span<const double> a, std::span<const double> b, double scale,
                     std::vector<double>& out) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return;
  const double cos = dot(a, b) / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] += scale * (b[i] / (na * nb) - cos * a[i] / (na * na));
  }
}

}  // namespace

double planted_task_loss(const PlantedQueryTask& task, std::span<const double> weights,
                         std::vector<double>* grad_weights) {
  const std::size_t m = task.queries.rows(), c = task.queries.cols();
  if (weights.size() != m) fail(ErrorKind::kDimension, "one weight per query expected");
  std::vector<double> agg(c, 0.0);
  for (std::size_t q = 0; q < m; ++q) {
    if (weights[q] == 0.0) continue;
    const auto row = task.queries.row(q);
    for (std::size_t i = 0; i < c; ++i) agg[i] += weights[q] * row[i];
  }
  const double loss = 1.0 - local_reward(agg, task.image_pooled.values(), task.point_pooled.values());
  if (grad_weights) {
    std::vector<double> g_agg(c, 0.0);
    add_cosine_grad(agg, task.image_pooled.values(), -0.5, g_agg);
    add_cosine_grad(agg, task.point_pooled.values(), -0.5, g_agg);
    grad_weights->assign(m, 0.0);
    for (std::size_t q = 0; q < m; ++q) (*grad_weights)[q] = dot(task.queries.row(q), g_agg);
  }
  return loss;
}

PlantedRunResult run_planted_schedule(const PlantedQueryTask& task,
                                      const PlantedScheduleConfig& cfg, Rng& rng) {
  cfg.validate();
  QueryPool pool(task.queries, cfg.k);
  pool.validate();
  const std::size_t m = pool.size();
  std::vector<double> local(m);
  for (std::size_t q = 0; q < m; ++q) {
    local[q] = local_reward(task.queries.row(q), task.image_pooled.values(),
                            task.point_pooled.values());
  }

  PlantedRunResult result;
  std::vector<double> weights(m), grad;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    PlantedEpochLog entry;
    entry.epoch = epoch;
    entry.stage = cfg.tri_stage ? stage_of_epoch(epoch, cfg.reward, cfg.epochs) : Stage::kWarmUp;
    entry.tau = decay_tau(cfg.reward, epoch);
    pool.stage = entry.stage;
    double loss_sum = 0.0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      if (entry.stage == Stage::kWarmUp) {
        // Selected queries are gated by sigmoid(score); gradients reach only them.
        std::fill(weights.begin(), weights.end(), 0.0);
        const auto sel = warmup_topk(pool, pool.queries);
        for (std::size_t q : sel) weights[q] = sigmoid(pool.scores[q]);
        loss_sum += planted_task_loss(task, weights, &grad);
        for (std::size_t q : sel) {
          const double g = weights[q];
          pool.scores[q] -= cfg.score_lr * grad[q] * g * (1.0 - g);
        }
      } else {
        SelectionOutcome outcome = sample_actions(pool, rng, cfg.reward.beta_mask);
        const double task_loss = planted_task_loss(task, outcome.soft_masks);
        loss_sum += task_loss;
        entry.alpha = fusion_alpha(epoch, entry.tau);
        assign_rewards(outcome, local, global_reward(task_loss, cfg.reward.eps_loss),
                       entry.alpha);
        const PolicyLoss policy = full_policy_loss(outcome, pool.scores, cfg.reward.mu_entropy);
        for (std::size_t q = 0; q < m; ++q) {
          pool.scores[q] -= cfg.score_lr * policy.grad_scores[q];
        }
      }
    }
    entry.task_loss = loss_sum / cfg.steps_per_epoch;
    result.log.push_back(entry);
  }
  pool.stage = Stage::kFinal;
  result.selected = final_select(pool);
  result.scores = pool.scores;
  for (std::size_t q : result.selected) {
    if (std::binary_search(task.planted.begin(), task.planted.end(), q)) ++result.recovered;
  }
  return result;
}

}  // namespace agentreg
