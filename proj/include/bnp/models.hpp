#pragma once

#include "bnp/layers.hpp"

#include <cstdint>
#include <optional>
#include <string_view>

namespace bnp {

enum class ModelKind { Cnp, Np, Canp, Anp, Bnp, Banp };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view s);
bool is_attentive(ModelKind kind);
bool has_latent(ModelKind kind);
bool is_bootstrap(ModelKind kind);

/// Layer counts and widths. Counts are MLP depths (number of linear layers).
struct ArchConfig {
  int pre_layers = 4;
  int post_layers = 2;
  int dec_layers = 3;
  int value_layers = 2;
  int qk_layers = 2;
  int hidden = 128;
  int latent = 128;
  int heads = 8;
  int dim_x = 1;
  int dim_y = 1;

  /// 1D-regression settings: attentive models use pre_layers = 2.
  static ArchConfig defaults(ModelKind kind, int hidden = 128);
  void validate(ModelKind kind) const;
  bool operator==(const ArchConfig&) const = default;
};

/// Graph-level Gaussian head: mu and sigma, one row per (block, point).
struct GaussianHead {
  Var mu;
  Var sigma;
};

/// Latent posterior statistics, one row per context block.
struct LatentHead {
  Var mean;  // eta
  Var std;   // rho in (0.1, 1)
};

/// `blocks` contexts of `size` pairs each, stacked block-major.
struct ContextStack {
  Var x;
  Var y;
  int blocks = 1;
  int size = 0;
};

/// Mean-pooled set encoder: pre-MLP per pair, optional ReLU + self-attention,
/// mean over the set, post-MLP.
struct PooledEncoder {
  Mlp pre;
  Mlp post;
  std::optional<MultiheadAttention> self_attention;

  Var forward(Graph& g, const ParamStore& store, const ContextStack& ctx) const;  // blocks x out
};

/// Cross-attention path: keys/queries from a shared f_qk, values from a
/// self-attended value MLP over the context pairs.
struct CrossAttentionEncoder {
  Mlp qk;
  Mlp value;
  MultiheadAttention self_attention;
  MultiheadAttention cross_attention;

  /// (blocks * t) x hidden; the t queries are shared by every block.
  Var forward(Graph& g, const ParamStore& store, const ContextStack& ctx, Var queries) const;
};

class Model {
 public:
  /// Builds the architecture and initialises weights from `init_seed`.
  Model(ModelKind kind, const ArchConfig& arch, std::uint64_t init_seed);

  ModelKind kind() const { return kind_; }
  const ArchConfig& arch() const { return arch_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Width of the deterministic representation phi.
  int rep_dim() const;

  /// Deterministic representation for each (block, query): (blocks * t) x rep_dim,
  /// block-major. Context pairs are put in a canonical (x, y) order inside
  /// each block first, so the result does not depend on the input order.
  Var represent(Graph& g, const ContextStack& ctx, Var queries) const;

  /// q(z | context) per block. Only for models with a latent path.
  LatentHead latent(Graph& g, const ContextStack& ctx) const;

  /// Decodes rows of [rep, x] into (mu, sigma), sigma = 0.1 + 0.9 softplus(raw).
  /// `bootstrap_rep` feeds the adaptation layer (bootstrap models only).
  GaussianHead decode(Graph& g, Var rep, Var x, std::optional<Var> bootstrap_rep = std::nullopt) const;

  /// Per-block representation (blocks x rep_dim) for models without cross-attention.
  Var represent_blocks(Graph& g, const ContextStack& ctx) const;

  /// Same result as `decode` on block-major rows (rep_j, x_i), with rep and
  /// bootstrap_rep given once per block and x (t rows) shared by all blocks.
  /// The first layer is split into its rep and x parts.
  GaussianHead decode_blocks(Graph& g, Var rep, Var x, std::optional<Var> bootstrap_rep = std::nullopt) const;

 private:
  ContextStack canonical(Graph& g, const ContextStack& ctx) const;

  ModelKind kind_;
  ArchConfig arch_;
  ParamStore params_;
  // CNP/BNP: pooled[0], pooled[1]; NP: pooled[0] det. CANP/BANP: cross + pooled[0]; ANP: cross.
  std::vector<PooledEncoder> pooled_;
  std::optional<CrossAttentionEncoder> cross_;
  std::optional<PooledEncoder> latent_;
  Mlp decoder_;
  std::optional<Linear> adaptation_;
};

/// Squashing used for predictive scales: 0.1 + 0.9 softplus(raw).
Var squash_sigma(Graph& g, Var raw);
/// Squashing used for latent scales: 0.1 + 0.9 sigmoid(raw).
Var squash_rho(Graph& g, Var raw);

/// Convenience: value-level encoders on a single context (inference graph).
Matrix encode_context(const Model& model, const Matrix& xc, const Matrix& yc, const Matrix& queries);
struct LatentValues {
  Matrix mean;
  Matrix std;
};
LatentValues encode_latent(const Model& model, const Matrix& xc, const Matrix& yc);

}  // namespace bnp
