#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bnp {

class Rng;

/// Row-major so that one row is one point and one column is one feature.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ParamId {
  int index = -1;
  bool valid() const { return index >= 0; }
};

struct ParamInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Flat storage for every network weight, its gradient and its Adam moments.
///
/// Parameters are addressed by `ParamId`; each one owns a contiguous slice of
/// the flat arrays so that gradients from independent tasks can be summed as
/// plain vectors.
class ParamStore {
 public:
  /// Registers a zero-initialised parameter. Names must be unique.
  ParamId add(std::string name, int rows, int cols);

  void init_uniform(ParamId id, double bound, Rng& rng);
  void fill(ParamId id, double value);

  Eigen::Map<const Matrix> value(ParamId id) const;
  Eigen::Map<Matrix> value(ParamId id);
  const ParamInfo& info(ParamId id) const { return info_[static_cast<std::size_t>(id.index)]; }
  const std::vector<ParamInfo>& infos() const { return info_; }
  ParamId find(const std::string& name) const;

  int count() const { return static_cast<int>(info_.size()); }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  std::span<double> first_moment() { return m_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<double> second_moment() { return v_; }
  std::span<const double> second_moment() const { return v_; }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  void zero_grad();

 private:
  std::vector<ParamInfo> info_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t step_ = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update from the gradients stored in `params`.
/// Gradients are zeroed afterwards. Throws `std::runtime_error` naming the
/// parameter if any gradient is not finite.
void adam_step(ParamStore& params, double lr, const AdamConfig& config = {});

struct CosineSchedule {
  double base_lr = 5e-4;
  std::int64_t total_steps = 1;
};

/// base_lr * (1 + cos(pi * t / total)) / 2, reaching exactly 0 at t = total.
/// Steps past the end clamp to 0.
double cosine_lr(const CosineSchedule& schedule, std::int64_t t);

}  // namespace bnp
