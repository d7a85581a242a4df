#pragma once

#include "bnp/bootstrap.hpp"
#include "bnp/taskgen.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace bnp {

struct TrainConfig {
  ModelKind model = ModelKind::Cnp;
  Dataset dataset = Dataset::Rbf;
  VariantFlags flags;
  std::int64_t total_steps = 100000;
  int batch_tasks = 100;
  double lr0 = 5e-4;
  int k_train = 4;
  std::uint64_t seed = 0;
  int hidden = 128;
  bool importance_weighted = true;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  std::int64_t log_every = 100;
  std::int64_t checkpoint_every = 0;  // 0: final checkpoint only

  ArchConfig arch() const { return ArchConfig::defaults(model, hidden); }
  /// Throws std::invalid_argument describing the first bad field.
  void validate() const;
  /// `key = value` lines in a fixed order.
  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  bool operator==(const TrainConfig&) const = default;
};

/// Model weights plus everything needed to resume: the optimizer moments and
/// step live in the parameter store, and every random stream is derived from
/// (config.seed, step).
struct Checkpoint {
  TrainConfig config;
  std::int64_t step = 0;
  Model model;

  static Checkpoint fresh(const TrainConfig& config);
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws std::runtime_error naming the path when it cannot be read or does
/// not match the architecture its config describes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// PATH/step_{N}.ckpt
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step);

}  // namespace bnp
