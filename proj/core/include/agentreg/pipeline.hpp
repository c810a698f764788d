#pragma once

// Experiment orchestration used by the CLI and the acceptance suite.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "agentreg/config.hpp"
#include "agentreg/eval.hpp"
#include "agentreg/model.hpp"
#include "agentreg/synth.hpp"

namespace agentreg {

/// Worker cap from AGENTREG_THREADS, else the hardware concurrency.
std::size_t worker_count();

/// Runs fn(0..n-1) on up to worker_count() threads. The first exception (by
/// index) is rethrown after every task finished.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct Dataset {
  std::uint64_t seed = 0;
  std::vector<SyntheticPair> train, val, test;

  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

/// Every pair draws from its own stream derived from (seed, split, index).
Dataset generate_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

/// <dir>/manifest.txt lists the pairs; each pair lives in <dir>/<split>/<id>.
void write_dataset(const std::string& dir, const Dataset& data);
Dataset read_dataset(const std::string& dir);

struct EpochLog {
  int epoch = 0;
  Stage stage = Stage::kWarmUp;
  double task_loss = 0.0;               // mean L_t over the epoch
  std::optional<double> policy_loss;    // mean L_full when Stage II ran
  double alpha = 0.0;
  double tau = 0.0;
  std::vector<std::size_t> selected;    // deployed agents after the epoch
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

/// Stage per epoch: the tri schedule for tri variants, warm-up otherwise.
Stage training_stage(const ExperimentConfig& cfg, int epoch);

/// Plain gradient descent over cfg.epochs passes of the training split.
/// `prepared` may be passed to reuse cached phase maps. With `resume`, training
/// continues after resume->epoch and matches an uninterrupted run bit for bit.
TrainResult train_model(const ExperimentConfig& cfg, const std::vector<SyntheticPair>& train,
                        const std::vector<PreparedPair>* prepared = nullptr,
                        const Model* resume = nullptr);

void write_train_log(std::ostream& out, const std::vector<EpochLog>& log);

struct EvalOptions {
  bool oracle_pose = false;  // replace the estimate with T_gt
  bool parallel = true;
};

/// Runs matching and PnP-RANSAC on every pair. Pose failures
/// are recorded in the pair's row.
MetricReport evaluate_model(const Model& model, const std::vector<SyntheticPair>& test,
                            const ExperimentConfig& cfg, const EvalOptions& options = {},
                            const std::vector<PreparedPair>* prepared = nullptr);

std::vector<PreparedPair> prepare_pairs(const std::vector<SyntheticPair>& pairs,
                                        const LossParams& loss, bool with_phase,
                                        bool parallel = true);

/// The decision-bearing corners of the variant grid.
std::vector<std::string> ablation_variants();

struct AblationCell {
  std::string variant;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failure;
  double pir = 0.0, ir = 0.0, fmr = 0.0, rr = 0.0;
};

struct AblationRow {
  std::string variant;
  std::size_t runs = 0;  // successful runs averaged
  double pir = 0.0, ir = 0.0, fmr = 0.0, rr = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // seed-major, variants in declared order
  std::vector<AblationRow> rows;
  bool ordering_holds = false;      // RR: M8 >= M7 >= M6 >= M1
  bool gap_every_seed = false;      // RR: M8 - M1 > 0 for each seed
};

/// Trains and evaluates every variant on every seed. Without `shared` each
/// seed generates its own dataset.
AblationResult run_ablation(const ExperimentConfig& cfg, const Dataset* shared = nullptr);

void write_ablation_csv(std::ostream& out, const AblationResult& result);
void write_ablation_markdown(std::ostream& out, const AblationResult& result);

}  // namespace agentreg
