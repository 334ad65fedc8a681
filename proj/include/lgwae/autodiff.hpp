#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "lgwae/tensor.hpp"

namespace lgwae::ad {

class Graph;

/// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Tape of recorded operations, rebuilt for every forward pass.
///
/// Nodes are appended in evaluation order, so the tape is topologically
/// sorted by construction. backward() walks it once in reverse. A graph is
/// single-threaded; independent graphs may share read-only bound tensors.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that owns its value.
  Var leaf(Tensor value, bool requires_grad = false);
  /// Leaf referencing an external tensor; it must outlive the graph.
  Var bind(const Tensor& external, bool requires_grad = false);

  const Tensor& value(Var v) const;
  /// Gradient accumulated by backward(); zeros if the node received none.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const;

  /// Reverse sweep from a scalar loss.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(Var v) const;

  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  /// Records an op result. Used by the primitive implementations.
  Var record(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad_buffer(std::size_t index);
  const Tensor& value_at(std::size_t index) const;
  bool needs_grad_at(std::size_t index) const { return nodes_[index].requires_grad; }

 private:
  struct Node {
    std::string op;
    Tensor own;
    const Tensor* external = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Primitives. Every op checks shapes and throws ShapeError naming itself.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
/// a (r x c) plus a row vector (1 x c or shape {c}) added to every row.
Var add_row(Var a, Var row);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var a, const std::vector<std::size_t>& rows);
Var reshape(Var a, Shape shape);
Var transpose(Var a);
Var softmax_lastdim(Var a);
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
Var gelu(Var a);
Var sigmoid(Var a);
Var reciprocal(Var a);
Var sum(Var a);
Var mean(Var a);
/// Sum of absolute values.
Var l1(Var a);
Var l2_norm(Var a);
/// Elementwise binary cross entropy of sigmoid(logits) against targets in [0,1],
/// evaluated in the numerically stable logit form.
Var bce_with_logits(Var logits, const Tensor& targets);
/// D[i][j] = sum_k (a[i][k] - b[j][k])^2, computed by direct differences.
Var pairwise_sq_dist(Var a, Var b);
/// Row (i*m + j) = u[i] + v[j]; u is n x h, v is m x h.
Var outer_sum_rows(Var u, Var v);

}  // namespace lgwae::ad
