#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmcforge/config.hpp"
#include "cmcforge/dataset.hpp"
#include "cmcforge/losses.hpp"
#include "cmcforge/nets.hpp"

namespace cmcforge {

// (lambda_2d, lambda_3d) at a given epoch: 0 before base_epochs, then a
// linear ramp reaching lambda_max after ramp_epochs.
std::pair<double, double> lambda_at(int epoch, const Schedule& schedule);

struct Branches {
  std::optional<BranchState> two_d;
  std::optional<BranchState> three_d;
};

// Fresh students (seeded from the experiment seed) with teachers copied from them.
Branches init_branches(const ExperimentConfig& config);

struct BatchItem {
  const SceneData* scene{nullptr};
  int view_id{0};
};

// One optimization step over a batch of views. `step_seed` drives sampling
// and augmentation; gradients are averaged over the batch in item order.
LossReport train_step(Branches& branches, std::span<const BatchItem> batch, const TrainingConfig& config,
                      double lambda_2d, double lambda_3d, std::uint64_t step_seed, int threads = 1);

// Point subsample for one training view under the configured strategy.
ViewSample sample_for_view(const SceneData& scene, int view_id, const SamplingConfig& sampling,
                           std::uint64_t seed);

struct EvalMetrics {
  int epoch{0};
  double miou_2d{0};
  double miou_3d_true{0};
  double miou_3d_unprojected{0};
  std::vector<double> iou_2d;
  std::vector<double> iou_3d_true;
};

// Scores the teacher networks on the evaluation scenes. Disabled branches report NaN.
EvalMetrics evaluate(const Branches& branches, std::span<const SceneData> scenes, int threads = 1);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  int threads{1};
  bool resume{false};
  // Stop after this many epochs in this invocation (for resume tests); < 0 runs to the end.
  int stop_after{-1};
};

struct StepLog {
  int epoch{0};
  int step{0};
  LossReport report;
};

struct RunResult {
  std::string config_hash;
  std::vector<StepLog> losses;
  std::vector<EvalMetrics> metrics;
  Branches final_state;

  const EvalMetrics& final_metrics() const { return metrics.back(); }
};

RunResult run_experiment(const ExperimentConfig& config, const Dataset& dataset, const RunOptions& options = {});

std::string losses_csv(const RunResult& result);
std::string metrics_csv(const RunResult& result);

}  // namespace cmcforge
