#pragma once

// Score training on the planted query task. Only the scores are learned; the
// task loss is 1 - local_reward of the mask-weighted sum of queries.

#include <cstddef>
#include <vector>

#include "agentreg/agents.hpp"
#include "agentreg/synth.hpp"

namespace agentreg {

struct PlantedScheduleConfig {
  std::size_t k = 12;
  int epochs = 50;
  int steps_per_epoch = 10;
  double score_lr = 0.1;
  bool tri_stage = true;  // false keeps warm-up top-k for every epoch
  RewardConfig reward;

  void validate() const;
};

struct PlantedEpochLog {
  int epoch = 0;
  Stage stage = Stage::kWarmUp;
  double task_loss = 0.0;  // mean over the epoch's steps
  double alpha = 0.0;      // 0 outside Stage II
  double tau = 0.0;
};

struct PlantedRunResult {
  std::vector<std::size_t> selected;
  std::size_t recovered = 0;
  std::vector<double> scores;
  std::vector<PlantedEpochLog> log;
};

/// Task loss of a weighted query sum and its gradient per weight.
double planted_task_loss(const PlantedQueryTask& task, std::span<const double> weights,
                         std::vector<double>* grad_weights = nullptr);

PlantedRunResult run_planted_schedule(const PlantedQueryTask& task,
                                      const PlantedScheduleConfig& cfg, Rng& rng);

}  // namespace agentreg
