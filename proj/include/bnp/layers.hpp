#pragma once

#include "bnp/diff.hpp"

#include <string>
#include <vector>

namespace bnp {

class Rng;

struct Linear {
  ParamId weight;  // in x out
  ParamId bias;    // 1 x out
  int in = 0;
  int out = 0;

  /// Weights uniform in +-1/sqrt(in), zero bias. `zero_init` zeroes both.
  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng, bool zero_init = false);
  Var forward(Graph& g, const ParamStore& store, Var x) const;
};

/// MLP(depth, in, hidden, out): `depth` linear layers with a ReLU after every
/// layer except the last. depth >= 2.
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(ParamStore& store, const std::string& name, int depth, int in, int hidden, int out, Rng& rng);
  Var forward(Graph& g, const ParamStore& store, Var x) const;
  /// Runs layers [first, end) on an input that is already the activated
  /// output of layer first-1.
  Var forward_from(Graph& g, const ParamStore& store, Var h, std::size_t first) const;
  int in_dim() const { return layers.front().in; }
  int out_dim() const { return layers.back().out; }
};

struct LayerNorm {
  ParamId gain;
  ParamId bias;

  static LayerNorm create(ParamStore& store, const std::string& name, int dim);
  Var forward(Graph& g, const ParamStore& store, Var x) const;
};

/// MHA(d_out)(Q, K, V):
///   Q', K', V' = linear projections, split into `heads` column groups
///   H_j = softmax(Q'_j K'_j^T / sqrt(d_out)) V'_j, H = concat_j H_j
///   H' = LN(Q' + H);  out = LN(H' + ReLU(Linear(H')))
struct MultiheadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear feed;
  LayerNorm norm1;
  LayerNorm norm2;
  int heads = 1;
  int dim = 0;

  static MultiheadAttention create(ParamStore& store, const std::string& name, int d_query, int d_key, int d_value,
                                   int d_out, int heads, Rng& rng);
  /// Concatenated per-head attention H, before the residual and normalisation stages.
  Var attend(Graph& g, const ParamStore& store, Var q, Var k, Var v) const;
  Var forward(Graph& g, const ParamStore& store, Var q, Var k, Var v) const;
};

}  // namespace bnp
