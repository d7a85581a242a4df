#pragma once

#include "bnp/checkpoint.hpp"
#include "bnp/objectives.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace bnp {

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  Execution execution = Execution::Parallel;
  /// Called at every logging interval with (step, mean loss since last log, lr).
  std::function<void(std::int64_t, double, double)> on_log;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;  // one per step run
};

/// Training batch b: tasks from (seed, "train", b), per-task noise from (seed, "noise", b).
std::vector<Task> training_batch(const TrainConfig& config, std::int64_t step);
std::vector<TaskNoise> training_noise(const TrainConfig& config, const Model& model, std::int64_t step,
                                      std::span<const Task> tasks);

/// Runs the remaining steps of `start` up to config.total_steps.
///
/// A non-finite loss or gradient saves the last good state to
/// out_dir/step_{N}.ckpt (when out_dir is set) and throws std::runtime_error.
TrainResult resume(Checkpoint start, const TrainOptions& options = {});
TrainResult train(const TrainConfig& config, const TrainOptions& options = {});

}  // namespace bnp
