#include "bnp/layers.hpp"

#include "bnp/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace bnp {

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng, bool zero_init) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".w", in, out);
  l.bias = store.add(name + ".b", 1, out);
  if (!zero_init) store.init_uniform(l.weight, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  return l;
}

Var Linear::forward(Graph& g, const ParamStore& store, Var x) const {
  if (g.cols(x) != in)
    throw std::invalid_argument("linear: expected " + std::to_string(in) + " input features, got " +
                                std::to_string(g.cols(x)));
  return g.add_row(g.matmul(x, g.param(store, weight)), g.param(store, bias));
}

Mlp Mlp::create(ParamStore& store, const std::string& name, int depth, int in, int hidden, int out, Rng& rng) {
  if (depth < 2) throw std::invalid_argument("mlp '" + name + "': depth must be >= 2");
  Mlp m;
  for (int i = 0; i < depth; ++i) {
    const int a = i == 0 ? in : hidden;
    const int b = i == depth - 1 ? out : hidden;
    m.layers.push_back(Linear::create(store, name + "." + std::to_string(i), a, b, rng));
  }
  return m;
}

Var Mlp::forward(Graph& g, const ParamStore& store, Var x) const {
  Var h = layers.front().forward(g, store, x);
  if (layers.size() == 1) return h;
  return forward_from(g, store, g.relu(h), 1);
}

Var Mlp::forward_from(Graph& g, const ParamStore& store, Var h, std::size_t first) const {
  for (std::size_t i = first; i < layers.size(); ++i) {
    h = layers[i].forward(g, store, h);
    if (i + 1 < layers.size()) h = g.relu(h);
  }
  return h;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int dim) {
  LayerNorm n;
  n.gain = store.add(name + ".gain", 1, dim);
  n.bias = store.add(name + ".bias", 1, dim);
  store.fill(n.gain, 1.0);
  return n;
}

Var LayerNorm::forward(Graph& g, const ParamStore& store, Var x) const {
  return g.layer_norm_rows(x, g.param(store, gain), g.param(store, bias));
}

MultiheadAttention MultiheadAttention::create(ParamStore& store, const std::string& name, int d_query, int d_key,
                                              int d_value, int d_out, int heads, Rng& rng) {
  if (heads <= 0 || d_out % heads != 0)
    throw std::invalid_argument("attention '" + name + "': d_out must be divisible by the head count");
  MultiheadAttention a;
  a.heads = heads;
  a.dim = d_out;
  a.query = Linear::create(store, name + ".q", d_query, d_out, rng);
  a.key = Linear::create(store, name + ".k", d_key, d_out, rng);
  a.value = Linear::create(store, name + ".v", d_value, d_out, rng);
  a.feed = Linear::create(store, name + ".fc", d_out, d_out, rng);
  a.norm1 = LayerNorm::create(store, name + ".ln1", d_out);
  a.norm2 = LayerNorm::create(store, name + ".ln2", d_out);
  return a;
}

namespace {

Var attend_projected(Graph& g, Var qp, Var kp, Var vp, int dim, int heads) {
  const int width = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<Var> parts;
  parts.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = heads == 1 ? qp : g.slice_cols(qp, h * width, width);
    const Var kh = heads == 1 ? kp : g.slice_cols(kp, h * width, width);
    const Var vh = heads == 1 ? vp : g.slice_cols(vp, h * width, width);
    const Var w = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), inv_sqrt));
    parts.push_back(g.matmul(w, vh));
  }
  return heads == 1 ? parts.front() : g.concat_cols(parts);
}

void check_kv(const Graph& g, Var k, Var v) {
  if (g.rows(k) == 0 || g.rows(k) != g.rows(v))
    throw std::invalid_argument("attention: keys and values must be non-empty and aligned");
}

}  // namespace

Var MultiheadAttention::attend(Graph& g, const ParamStore& store, Var q, Var k, Var v) const {
  check_kv(g, k, v);
  return attend_projected(g, query.forward(g, store, q), key.forward(g, store, k), value.forward(g, store, v), dim,
                          heads);
}

Var MultiheadAttention::forward(Graph& g, const ParamStore& store, Var q, Var k, Var v) const {
  check_kv(g, k, v);
  const Var qp = query.forward(g, store, q);
  const Var hcat = attend_projected(g, qp, key.forward(g, store, k), value.forward(g, store, v), dim, heads);
  const Var h1 = norm1.forward(g, store, g.add(qp, hcat));
  return norm2.forward(g, store, g.add(h1, g.relu(feed.forward(g, store, h1))));
}

}  // namespace bnp
