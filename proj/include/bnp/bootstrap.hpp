#pragma once

#include "bnp/models.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bnp {

class Rng;

/// Ablation switches for the bootstrap pipeline.
///
/// `naive` feeds residual-bootstrap contexts through the plain base model
/// (residuals from the full context, no adaptation layer, base-only
/// training). It cannot be combined with the other switches.
struct VariantFlags {
  bool naive = false;
  bool skip_paired = false;
  bool skip_adaptation = false;
  bool skip_base_loss = false;

  bool any() const { return naive || skip_paired || skip_adaptation || skip_base_loss; }
  /// Throws std::invalid_argument for combinations that are not a pipeline.
  void validate() const;
  /// CLI name: full|naive|no-paired|no-adapt|no-baseloss.
  std::string name() const;
  static VariantFlags parse(std::string_view name);
  bool operator==(const VariantFlags&) const = default;
};

/// A context set (X_c, Y_c) as values.
struct ContextSet {
  Matrix x;  // m x d_x
  Matrix y;  // m x d_y
  int size() const { return static_cast<int>(x.rows()); }
};

/// Residuals of the base model at the original context points, computed
/// while conditioning on one (paired-bootstrap) context.
struct ResidualSet {
  Matrix mu;     // m x 1, base prediction at the full context
  Matrix sigma;  // m x 1
  Matrix eps;    // m x 1, (y - mu) / sigma
};

/// Bootstrap context: the original inputs with labels rebuilt from resampled residuals.
struct BootstrapContext {
  Matrix x;                 // identical to the original context inputs
  Matrix y;                 // mu_i + sigma_i * eps_{index_i}
  std::vector<int> index;   // which residual each label used
};

/// k per-target Gaussian components; rows are components, columns targets.
struct EnsemblePrediction {
  Matrix mu;
  Matrix sigma;
  int components() const { return static_cast<int>(mu.rows()); }
  int targets() const { return static_cast<int>(mu.cols()); }
};

/// All randomness of one bootstrap forward pass, drawn up front so the
/// pipeline itself is a deterministic function of (params, task, draw).
struct BootstrapDraw {
  std::vector<std::vector<int>> paired;    // k x m indices into the context; empty when skipped
  std::vector<std::vector<int>> residual;  // k x m indices into E(j)

  int k() const { return static_cast<int>(residual.size()); }
  /// Draws paired indices first (unless `with_paired` is false), then residual indices.
  static BootstrapDraw sample(Rng& rng, int context_size, int k, bool with_paired);
};

/// k contexts of |c| pairs each, drawn uniformly with replacement.
std::vector<ContextSet> paired_bootstrap(Rng& rng, const ContextSet& context, int k);
ContextSet gather_context(const ContextSet& context, std::span<const int> index);

/// Base-model residuals at the original context points for each resampled context.
std::vector<ResidualSet> compute_residuals(const Model& model, const ContextSet& context,
                                           std::span<const ContextSet> resampled);
BootstrapContext make_bootstrap_context(Rng& rng, const ContextSet& context, const ResidualSet& residuals);
BootstrapContext make_bootstrap_context(const ContextSet& context, const ResidualSet& residuals,
                                        std::vector<int> index);

/// Graph-level pipeline outputs for t targets.
struct BootstrapHeads {
  GaussianHead base;        // t rows, conditioned on the full context
  GaussianHead components;  // k * t rows, block-major
  Var bootstrap_y;          // k * m rows, reconstructed labels (invalid for skipped stages)
  int k = 0;
  int targets = 0;
};

/// The bootstrap forward pass on a graph: paired resampling, residuals at
/// the context, residual resampling within each j, encoding of the
/// bootstrap contexts and decoding through the adaptation layer.
BootstrapHeads bootstrap_heads(Graph& g, const Model& model, const ContextSet& context, const Matrix& x_targets,
                               const BootstrapDraw& draw, const VariantFlags& flags);

struct BootstrapResult {
  EnsemblePrediction ensemble;
  EnsemblePrediction base;  // one component
};

BootstrapResult bnp_forward(const Model& model, const ContextSet& context, const Matrix& x_targets, int k,
                            const VariantFlags& flags, Rng& rng);
BootstrapResult bnp_forward(const Model& model, const ContextSet& context, const Matrix& x_targets,
                            const BootstrapDraw& draw, const VariantFlags& flags);

/// log((1/k) sum_j N(y_i | mu_ij, sigma_ij^2)) per target, via log-sum-exp.
std::vector<double> ensemble_log_density(const EnsemblePrediction& pred, std::span<const double> y);

/// Graph version over k * t block-major rows: returns t x 1.
Var mixture_log_prob(Graph& g, Var y_tiled, const GaussianHead& head, int k);

}  // namespace bnp
