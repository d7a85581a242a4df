#pragma once

#include "bnp/params.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace bnp {

/// Handle to a node in a `Graph`. Only meaningful for the graph that made it.
struct Var {
  int id = -1;
};

/// Reverse-mode automatic differentiation over dense row-major matrices.
///
/// A graph is built once per task (or per forward pass), evaluated eagerly as
/// ops are appended, then optionally differentiated with `backward`. Node
/// values never change after creation. A graph created with
/// `recording = false` skips the backward closures and is used for
/// inference.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }

  Var constant(Matrix value);
  Var scalar(double v);
  /// Leaf bound to a parameter; repeated calls for the same id return the same node.
  Var param(const ParamStore& store, ParamId id);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  double scalar_value(Var v) const { return value(v)(0, 0); }
  int rows(Var v) const { return static_cast<int>(value(v).rows()); }
  int cols(Var v) const { return static_cast<int>(value(v).cols()); }
  std::size_t size() const { return nodes_.size(); }

  // Linear algebra.
  Var matmul(Var a, Var b);     ///< a * b
  Var matmul_nt(Var a, Var b);  ///< a * b^T
  Var add_row(Var a, Var row);  ///< adds a 1 x m row to every row of a

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double c);
  Var affine(Var a, double scale, double shift);  ///< scale * a + shift
  Var relu(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var exp(Var a);
  Var log(Var a);

  // Shape manipulation.
  Var concat_cols(std::span<const Var> parts);
  Var concat_cols(std::initializer_list<Var> parts) { return concat_cols(std::span<const Var>(parts.begin(), parts.size())); }
  Var concat_rows(std::span<const Var> parts);
  Var slice_cols(Var a, int start, int count);
  Var slice_rows(Var a, int start, int count);
  Var gather_rows(Var a, std::vector<int> index);
  /// Row r of the input becomes rows [r*times, (r+1)*times) of the output.
  Var repeat_rows(Var a, int times);
  /// The whole input stacked `times` times.
  Var tile_rows(Var a, int times);
  /// (k*m x d) -> (k x d): mean over each consecutive block of m rows.
  Var block_mean_rows(Var a, int block);
  /// (k*n x 1) laid out block-major -> (n x k), out(i, j) = a(j*n + i).
  Var unstack_blocks(Var a, int blocks);

  // Row-wise reductions and normalisations.
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);
  Var logsumexp_rows(Var a);  ///< (n x k) -> (n x 1)
  Var sum(Var a);             ///< -> 1 x 1
  Var mean(Var a);            ///< -> 1 x 1

  /// Elementwise log N(y | mu, sigma^2); all three operands are differentiable.
  Var normal_log_prob(Var y, Var mu, Var sigma);

  /// Accumulates d(loss)/d(param) into `grad_out` (indexed like ParamStore::values()).
  /// `loss` must be 1 x 1. Throws std::runtime_error naming the first node
  /// whose forward value is not finite.
  void backward(Var loss, const ParamStore& store, std::span<double> grad_out);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Graph&, const Matrix&)> back;
    const char* op = "";
    int param = -1;
    bool needs = false;  // a parameter is upstream of this node
  };

  Var push(Matrix value, const char* op, std::span<const Var> inputs = {});
  Var push(Matrix value, const char* op, std::initializer_list<Var> inputs) {
    return push(std::move(value), op, std::span<const Var>(inputs.begin(), inputs.size()));
  }
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs; }
  /// grad(v) += e, assigning on first use and skipping nodes no parameter feeds.
  template <class E>
  void acc(Var v, const E& e) {
    auto& n = node(v);
    if (!n.needs) return;
    if (n.grad.size() == 0) {
      n.grad = e;
    } else {
      n.grad += e;
    }
  }
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  /// Gradient slot of v, zero-initialised on first use.
  Matrix& grad(Var v);
  template <class F>
  void on_backward(Var out, F&& f) {
    if (recording_ && node(out).needs) node(out).back = std::forward<F>(f);
  }

  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;  // param index -> node id, -1 when unbound
  bool recording_;
};

}  // namespace bnp
