#include "bnp/diff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bnp {

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), op, "shape mismatch " + shape(a) + " vs " + shape(b));
}

double softplus_scalar(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Graph::push(Matrix value, const char* op, std::span<const Var> inputs) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  if (recording_)
    for (Var in : inputs) n.needs = n.needs || nodes_[static_cast<std::size_t>(in.id)].needs;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Graph::grad(Var v) {
  auto& n = node(v);
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::constant(Matrix value) { return push(std::move(value), "constant"); }

Var Graph::scalar(double v) { return push(Matrix::Constant(1, 1, v), "constant"); }

Var Graph::param(const ParamStore& store, ParamId id) {
  require(id.valid() && id.index < store.count(), "param", "invalid parameter id");
  if (param_nodes_.size() < static_cast<std::size_t>(store.count()))
    param_nodes_.resize(static_cast<std::size_t>(store.count()), -1);
  auto& slot = param_nodes_[static_cast<std::size_t>(id.index)];
  if (slot >= 0) return Var{slot};
  Var v = push(store.value(id), "param");
  node(v).param = id.index;
  node(v).needs = recording_;
  slot = v.id;
  return v;
}

Var Graph::matmul(Var a, Var b) {
  require(value(a).cols() == value(b).rows(), "matmul", shape(value(a)) + " * " + shape(value(b)));
  Var out = push(value(a) * value(b), "matmul", {a, b});
  on_backward(out, [a, b](Graph& g, const Matrix& go) {
    g.acc(a, go * g.value(b).transpose());
    g.acc(b, g.value(a).transpose() * go);
  });
  return out;
}

Var Graph::matmul_nt(Var a, Var b) {
  require(value(a).cols() == value(b).cols(), "matmul_nt", shape(value(a)) + " * " + shape(value(b)) + "^T");
  Var out = push(value(a) * value(b).transpose(), "matmul_nt", {a, b});
  on_backward(out, [a, b](Graph& g, const Matrix& go) {
    g.acc(a, go * g.value(b));
    g.acc(b, go.transpose() * g.value(a));
  });
  return out;
}

Var Graph::add_row(Var a, Var row) {
  require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row",
          shape(value(a)) + " + " + shape(value(row)));
  Matrix r = value(a);
  r.rowwise() += value(row).row(0);
  Var out = push(std::move(r), "add_row", {a, row});
  on_backward(out, [a, row](Graph& g, const Matrix& go) {
    g.acc(a, go);
    g.acc(row, go.colwise().sum());
  });
  return out;
}

Var Graph::add(Var a, Var b) {
  same_shape(value(a), value(b), "add");
  Var out = push(value(a) + value(b), "add", {a, b});
  on_backward(out, [a, b](Graph& g, const Matrix& go) {
    g.acc(a, go);
    g.acc(b, go);
  });
  return out;
}

Var Graph::sub(Var a, Var b) {
  same_shape(value(a), value(b), "sub");
  Var out = push(value(a) - value(b), "sub", {a, b});
  on_backward(out, [a, b](Graph& g, const Matrix& go) {
    g.acc(a, go);
    g.acc(b, -(go));
  });
  return out;
}

Var Graph::mul(Var a, Var b) {
  same_shape(value(a), value(b), "mul");
  Var out = push(value(a).cwiseProduct(value(b)), "mul", {a, b});
  on_backward(out, [a, b](Graph& g, const Matrix& go) {
    g.acc(a, go.cwiseProduct(g.value(b)));
    g.acc(b, go.cwiseProduct(g.value(a)));
  });
  return out;
}

Var Graph::div(Var a, Var b) {
  same_shape(value(a), value(b), "div");
  Var out = push(value(a).cwiseQuotient(value(b)), "div", {a, b});
  on_backward(out, [a, b, out](Graph& g, const Matrix& go) {
    const Matrix q = go.cwiseQuotient(g.value(b));
    g.acc(a, q);
    g.acc(b, -(q.cwiseProduct(g.value(out))));
  });
  return out;
}

Var Graph::scale(Var a, double c) { return affine(a, c, 0.0); }

Var Graph::affine(Var a, double s, double shift) {
  Matrix r = (value(a).array() * s + shift).matrix();
  Var out = push(std::move(r), "affine", {a});
  on_backward(out, [a, s](Graph& g, const Matrix& go) { g.acc(a, go * s); });
  return out;
}

Var Graph::relu(Var a) {
  Var out = push(value(a).cwiseMax(0.0), "relu", {a});
  on_backward(out, [a](Graph& g, const Matrix& go) {
    g.acc(a, (g.value(a).array() > 0.0).select(go, 0.0).matrix());
  });
  return out;
}

Var Graph::sigmoid(Var a) {
  Var out = push(value(a).unaryExpr([](double x) { return sigmoid_scalar(x); }), "sigmoid", {a});
  on_backward(out, [a, out](Graph& g, const Matrix& go) {
    const auto& s = g.value(out).array();
    g.acc(a, (go.array() * s * (1.0 - s)).matrix());
  });
  return out;
}

Var Graph::softplus(Var a) {
  Var out = push(value(a).unaryExpr([](double x) { return softplus_scalar(x); }), "softplus", {a});
  on_backward(out, [a](Graph& g, const Matrix& go) {
    g.acc(a, go.cwiseProduct(g.value(a).unaryExpr([](double x) { return sigmoid_scalar(x); })));
  });
  return out;
}

Var Graph::exp(Var a) {
  Var out = push(value(a).array().exp().matrix(), "exp", {a});
  on_backward(out, [a, out](Graph& g, const Matrix& go) { g.acc(a, go.cwiseProduct(g.value(out))); });
  return out;
}

Var Graph::log(Var a) {
  Var out = push(value(a).array().log().matrix(), "log", {a});
  on_backward(out, [a](Graph& g, const Matrix& go) { g.acc(a, go.cwiseQuotient(g.value(a))); });
  return out;
}

Var Graph::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const auto rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    require(value(p).rows() == rows, "concat_cols", "row count mismatch");
    cols += value(p).cols();
  }
  Matrix r(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    r.middleCols(c, value(p).cols()) = value(p);
    c += value(p).cols();
  }
  Var out = push(std::move(r), "concat_cols", parts);
  on_backward(out, [ps = std::vector<Var>(parts.begin(), parts.end())](Graph& g, const Matrix& go) {
    Eigen::Index c0 = 0;
    for (Var p : ps) {
      const auto w = g.value(p).cols();
      g.acc(p, go.middleCols(c0, w));
      c0 += w;
    }
  });
  return out;
}

Var Graph::concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const auto cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    require(value(p).cols() == cols, "concat_rows", "column count mismatch");
    rows += value(p).rows();
  }
  Matrix r(rows, cols);
  Eigen::Index r0 = 0;
  for (Var p : parts) {
    r.middleRows(r0, value(p).rows()) = value(p);
    r0 += value(p).rows();
  }
  Var out = push(std::move(r), "concat_rows", parts);
  on_backward(out, [ps = std::vector<Var>(parts.begin(), parts.end())](Graph& g, const Matrix& go) {
    Eigen::Index q = 0;
    for (Var p : ps) {
      const auto h = g.value(p).rows();
      g.acc(p, go.middleRows(q, h));
      q += h;
    }
  });
  return out;
}

Var Graph::slice_cols(Var a, int start, int count) {
  require(start >= 0 && count > 0 && start + count <= cols(a), "slice_cols", "range out of bounds");
  Var out = push(value(a).middleCols(start, count), "slice_cols", {a});
  on_backward(out, [a, start, count](Graph& g, const Matrix& go) { if (g.needs(a)) g.grad(a).middleCols(start, count) += go; });
  return out;
}

Var Graph::slice_rows(Var a, int start, int count) {
  require(start >= 0 && count > 0 && start + count <= rows(a), "slice_rows", "range out of bounds");
  Var out = push(value(a).middleRows(start, count), "slice_rows", {a});
  on_backward(out, [a, start, count](Graph& g, const Matrix& go) { if (g.needs(a)) g.grad(a).middleRows(start, count) += go; });
  return out;
}

Var Graph::gather_rows(Var a, std::vector<int> index) {
  require(!index.empty(), "gather_rows", "empty index");
  const auto& v = value(a);
  Matrix r(static_cast<Eigen::Index>(index.size()), v.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < v.rows(), "gather_rows", "index out of range");
    r.row(static_cast<Eigen::Index>(i)) = v.row(index[i]);
  }
  Var out = push(std::move(r), "gather_rows", {a});
  on_backward(out, [a, idx = std::move(index)](Graph& g, const Matrix& go) {
    if (!g.needs(a)) return;
    auto& ga = g.grad(a);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += go.row(static_cast<Eigen::Index>(i));
  });
  return out;
}

Var Graph::repeat_rows(Var a, int times) {
  require(times > 0, "repeat_rows", "times must be positive");
  const auto& v = value(a);
  Matrix r(v.rows() * times, v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) r.middleRows(i * times, times).rowwise() = v.row(i);
  Var out = push(std::move(r), "repeat_rows", {a});
  on_backward(out, [a, times](Graph& g, const Matrix& go) {
    if (!g.needs(a)) return;
    auto& ga = g.grad(a);
    for (Eigen::Index i = 0; i < ga.rows(); ++i) ga.row(i) += go.middleRows(i * times, times).colwise().sum();
  });
  return out;
}

Var Graph::tile_rows(Var a, int times) {
  require(times > 0, "tile_rows", "times must be positive");
  const auto& v = value(a);
  Matrix r(v.rows() * times, v.cols());
  for (int t = 0; t < times; ++t) r.middleRows(t * v.rows(), v.rows()) = v;
  Var out = push(std::move(r), "tile_rows", {a});
  on_backward(out, [a, times](Graph& g, const Matrix& go) {
    if (!g.needs(a)) return;
    auto& ga = g.grad(a);
    const auto h = ga.rows();
    for (int t = 0; t < times; ++t) ga += go.middleRows(t * h, h);
  });
  return out;
}

Var Graph::block_mean_rows(Var a, int block) {
  const auto& v = value(a);
  require(block > 0 && v.rows() % block == 0, "block_mean_rows", "rows not divisible by block size");
  const auto k = v.rows() / block;
  Matrix r(k, v.cols());
  for (Eigen::Index j = 0; j < k; ++j) {
    // Fixed top-to-bottom summation order.
    Eigen::RowVectorXd acc = v.row(j * block);
    for (int i = 1; i < block; ++i) acc += v.row(j * block + i);
    r.row(j) = acc / static_cast<double>(block);
  }
  Var out = push(std::move(r), "block_mean_rows", {a});
  on_backward(out, [a, block](Graph& g, const Matrix& go) {
    if (!g.needs(a)) return;
    auto& ga = g.grad(a);
    const double inv = 1.0 / static_cast<double>(block);
    for (Eigen::Index j = 0; j < go.rows(); ++j)
      ga.middleRows(j * block, block).rowwise() += go.row(j) * inv;
  });
  return out;
}

Var Graph::unstack_blocks(Var a, int blocks) {
  const auto& v = value(a);
  require(v.cols() == 1 && blocks > 0 && v.rows() % blocks == 0, "unstack_blocks", "expected a (k*n x 1) column");
  const auto n = v.rows() / blocks;
  Matrix r(n, blocks);
  for (int j = 0; j < blocks; ++j)
    for (Eigen::Index i = 0; i < n; ++i) r(i, j) = v(j * n + i, 0);
  Var out = push(std::move(r), "unstack_blocks", {a});
  on_backward(out, [a, blocks](Graph& g, const Matrix& go) {
    if (!g.needs(a)) return;
    auto& ga = g.grad(a);
    const auto n = go.rows();
    for (int j = 0; j < blocks; ++j)
      for (Eigen::Index i = 0; i < n; ++i) ga(j * n + i, 0) += go(i, j);
  });
  return out;
}

Var Graph::softmax_rows(Var a) {
  Matrix r = value(a);
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double mx = r.row(i).maxCoeff();
    r.row(i) = (r.row(i).array() - mx).exp().matrix();
    r.row(i) /= r.row(i).sum();
  }
  Var out = push(std::move(r), "softmax_rows", {a});
  on_backward(out, [a, out](Graph& g, const Matrix& go) {
    const auto& s = g.value(out);
    const Eigen::VectorXd dot = go.cwiseProduct(s).rowwise().sum();
    g.acc(a, (s.array() * (go.colwise() - dot).array()).matrix());
  });
  return out;
}

Var Graph::layer_norm_rows(Var a, Var gain, Var bias, double eps) {
  const auto& x = value(a);
  const auto d = x.cols();
  require(value(gain).rows() == 1 && value(gain).cols() == d && value(bias).rows() == 1 && value(bias).cols() == d,
          "layer_norm_rows", "gain/bias must be 1 x d");
  Matrix xhat(x.rows(), d);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const Eigen::RowVectorXd c = x.row(i).array() - mu;
    const double var = c.squaredNorm() / static_cast<double>(d);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = c * inv_std(i);
  }
  Matrix r = xhat.array().rowwise() * value(gain).row(0).array();
  r.rowwise() += value(bias).row(0);
  Var out = push(std::move(r), "layer_norm_rows", {a, gain, bias});
  on_backward(out, [a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, const Matrix& go) {
    g.acc(gain, go.cwiseProduct(xhat).colwise().sum());
    g.acc(bias, go.colwise().sum());
    const Matrix gx = go.array().rowwise() * g.value(gain).row(0).array();
    const double dd = static_cast<double>(gx.cols());
    if (!g.needs(a)) return;
    auto& ga = g.grad(a);
    for (Eigen::Index i = 0; i < gx.rows(); ++i) {
      const double m1 = gx.row(i).mean();
      const double m2 = gx.row(i).dot(xhat.row(i)) / dd;
      ga.row(i) += (inv_std(i) * (gx.row(i).array() - m1 - xhat.row(i).array() * m2)).matrix();
    }
  });
  return out;
}

Var Graph::logsumexp_rows(Var a) {
  const auto& v = value(a);
  Matrix r(v.rows(), 1);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double mx = v.row(i).maxCoeff();
    r(i, 0) = mx + std::log((v.row(i).array() - mx).exp().sum());
  }
  Var out = push(std::move(r), "logsumexp_rows", {a});
  on_backward(out, [a, out](Graph& g, const Matrix& go) {
    const auto& v = g.value(a);
    const auto& l = g.value(out);
    if (!g.needs(a)) return;
    auto& ga = g.grad(a);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      ga.row(i) += ((v.row(i).array() - l(i, 0)).exp() * go(i, 0)).matrix();
  });
  return out;
}

Var Graph::sum(Var a) {
  Var out = push(Matrix::Constant(1, 1, value(a).sum()), "sum", {a});
  on_backward(out, [a](Graph& g, const Matrix& go) { g.acc(a, Matrix::Constant(g.rows(a), g.cols(a), go(0, 0))); });
  return out;
}

Var Graph::mean(Var a) {
  const double n = static_cast<double>(value(a).size());
  Var out = push(Matrix::Constant(1, 1, value(a).sum() / n), "mean", {a});
  on_backward(out, [a, n](Graph& g, const Matrix& go) { g.acc(a, Matrix::Constant(g.rows(a), g.cols(a), go(0, 0) / n)); });
  return out;
}

Var Graph::normal_log_prob(Var y, Var mu, Var sigma) {
  same_shape(value(y), value(mu), "normal_log_prob");
  same_shape(value(y), value(sigma), "normal_log_prob");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const auto z = ((value(y) - value(mu)).array() / value(sigma).array()).eval();
  Matrix r = (-half_log_2pi - value(sigma).array().log() - 0.5 * z.square()).matrix();
  Var out = push(std::move(r), "normal_log_prob", {y, mu, sigma});
  on_backward(out, [y, mu, sigma](Graph& g, const Matrix& go) {
    const auto s = g.value(sigma).array();
    const auto z = ((g.value(y) - g.value(mu)).array() / s).eval();
    const auto dy = (-go.array() * z / s).eval();
    g.acc(y, dy.matrix());
    g.acc(mu, -(dy.matrix()));
    g.acc(sigma, (go.array() * (z.square() - 1.0) / s).matrix());
  });
  return out;
}

void Graph::backward(Var loss, const ParamStore& store, std::span<double> grad_out) {
  if (!recording_) throw std::logic_error("backward on a non-recording graph");
  if (value(loss).rows() != 1 || value(loss).cols() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " + shape(value(loss)));
  if (grad_out.size() != store.size()) throw std::invalid_argument("backward: gradient buffer size mismatch");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& v = nodes_[i].value;
    if (!std::isfinite(v.sum()) && !v.allFinite())
      throw std::runtime_error("non-finite value produced by node " + std::to_string(i) + " (" + nodes_[i].op + ")");
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!needs(loss)) return;
  grad(loss).setOnes();
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs || n.grad.size() == 0) continue;
    if (n.back) n.back(*this, n.grad);
    if (n.param >= 0) {
      const auto& p = store.info(ParamId{n.param});
      for (std::size_t k = 0; k < p.size(); ++k) grad_out[p.offset + k] += n.grad.data()[k];
    }
  }
}

}  // namespace bnp
