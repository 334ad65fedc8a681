#include "lgwae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lgwae::ad {

const Tensor& Var::value() const {
  if (!graph) throw std::logic_error("Var: unbound handle");
  return graph->value(*this);
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.own = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::bind(const Tensor& external, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.external = &external;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Graph::value_at(std::size_t index) const {
  const Node& n = nodes_[index];
  return n.external ? *n.external : n.own;
}

const Tensor& Graph::value(Var v) const {
  if (v.graph != this || v.index >= nodes_.size()) throw std::invalid_argument("Var does not belong to this graph");
  return value_at(v.index);
}

Tensor Graph::grad(Var v) const {
  if (v.graph != this || v.index >= nodes_.size()) throw std::invalid_argument("Var does not belong to this graph");
  const Node& n = nodes_[v.index];
  return n.has_grad ? n.grad : Tensor::zeros_like(value_at(v.index));
}

bool Graph::requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }

const std::string& Graph::op_name(Var v) const { return nodes_.at(v.index).op; }

Tensor& Graph::grad_buffer(std::size_t index) {
  Node& n = nodes_[index];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(value_at(index));
    n.has_grad = true;
  }
  return n.grad;
}

Var Graph::record(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  n.own = std::move(value);
  for (std::size_t i : inputs) {
    if (nodes_[i].requires_grad) n.requires_grad = true;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Graph::backward(Var loss) {
  if (loss.graph != this || loss.index >= nodes_.size()) {
    throw std::invalid_argument("backward: loss is not a node of this graph");
  }
  if (value_at(loss.index).numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(value_at(loss.index).shape()));
  }
  if (backward_done_) throw std::logic_error("backward: graph already differentiated");
  backward_done_ = true;
  grad_buffer(loss.index)[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.has_grad || !n.backward) continue;
    n.backward(*this, i);
  }
}

namespace {

Graph& same_graph(std::initializer_list<Var> vars, const char* op) {
  Graph* g = vars.begin()->graph;
  for (const Var& v : vars) {
    if (!v.graph || v.graph != g) throw std::invalid_argument(std::string(op) + ": operands on different graphs");
  }
  return *g;
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

Shape mat(std::size_t r, std::size_t c) { return Shape{r, c}; }

// dX += dY * f'(x, y) for elementwise maps.
template <typename Deriv>
Graph::BackwardFn elementwise_backward(std::size_t in, Deriv deriv) {
  return [in, deriv](Graph& g, std::size_t self) {
    if (!g.needs_grad_at(in)) return;
    const Tensor& dy = g.grad_buffer(self);
    const Tensor& x = g.value_at(in);
    const Tensor& y = g.value_at(self);
    Tensor& dx = g.grad_buffer(in);
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += dy[i] * deriv(x[i], y[i]);
  };
}

void accumulate(Graph& g, std::size_t index, const Tensor& delta, double factor = 1.0) {
  if (!g.needs_grad_at(index)) return;
  Tensor& d = g.grad_buffer(index);
  for (std::size_t i = 0; i < d.numel(); ++i) d[i] += factor * delta[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph({a, b}, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) mismatch("matmul", A, B);
  Tensor out(mat(A.rows(), B.cols()));
  kernels::matmul(A, false, B, false, out, false);
  return g.record("matmul", std::move(out), {a.index, b.index}, [ai = a.index, bi = b.index](Graph& gr, std::size_t self) {
    const Tensor& dC = gr.grad_buffer(self);
    if (gr.needs_grad_at(ai)) kernels::matmul(dC, false, gr.value_at(bi), true, gr.grad_buffer(ai), true);
    if (gr.needs_grad_at(bi)) kernels::matmul(gr.value_at(ai), true, dC, false, gr.grad_buffer(bi), true);
  });
}

Var add(Var a, Var b) {
  Graph& g = same_graph({a, b}, "add");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) mismatch("add", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += B[i];
  return g.record("add", std::move(out), {a.index, b.index}, [ai = a.index, bi = b.index](Graph& gr, std::size_t self) {
    const Tensor dy = gr.grad_buffer(self);
    accumulate(gr, ai, dy);
    accumulate(gr, bi, dy);
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph({a, b}, "sub");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) mismatch("sub", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= B[i];
  return g.record("sub", std::move(out), {a.index, b.index}, [ai = a.index, bi = b.index](Graph& gr, std::size_t self) {
    const Tensor dy = gr.grad_buffer(self);
    accumulate(gr, ai, dy);
    accumulate(gr, bi, dy, -1.0);
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph({a, b}, "mul_elementwise");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) mismatch("mul_elementwise", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= B[i];
  return g.record("mul_elementwise", std::move(out), {a.index, b.index},
                  [ai = a.index, bi = b.index](Graph& gr, std::size_t self) {
                    const Tensor dy = gr.grad_buffer(self);
                    if (gr.needs_grad_at(ai)) {
                      const Tensor& bv = gr.value_at(bi);
                      Tensor& da = gr.grad_buffer(ai);
                      for (std::size_t i = 0; i < da.numel(); ++i) da[i] += dy[i] * bv[i];
                    }
                    if (gr.needs_grad_at(bi)) {
                      const Tensor& av = gr.value_at(ai);
                      Tensor& db = gr.grad_buffer(bi);
                      for (std::size_t i = 0; i < db.numel(); ++i) db[i] += dy[i] * av[i];
                    }
                  });
}

Var scale(Var a, double factor) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return g.record("scale", std::move(out), {a.index},
                  elementwise_backward(a.index, [factor](double, double) { return factor; }));
}

Var add_scalar(Var a, double value) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (double& v : out.data()) v += value;
  return g.record("add_scalar", std::move(out), {a.index},
                  elementwise_backward(a.index, [](double, double) { return 1.0; }));
}

Var add_row(Var a, Var row) {
  Graph& g = same_graph({a, row}, "add_row");
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols()) mismatch("add_row", A, R);
  Tensor out = A;
  const std::size_t c = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] += R[j];
  }
  return g.record("add_row", std::move(out), {a.index, row.index}, [ai = a.index, ri = row.index](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad_buffer(self);
    accumulate(gr, ai, dy);
    if (gr.needs_grad_at(ri)) {
      Tensor& dr = gr.grad_buffer(ri);
      const std::size_t c = dr.numel();
      for (std::size_t r = 0; r < dy.numel() / c; ++r) {
        for (std::size_t j = 0; j < c; ++j) dr[j] += dy[r * c + j];
      }
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Graph& g = *parts.front().graph;
  const std::size_t c = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> inputs;
  for (const Var& p : parts) {
    if (p.graph != &g) throw std::invalid_argument("concat: operands on different graphs");
    if (p.value().cols() != c) mismatch("concat", parts.front().value(), p.value());
    rows += p.value().rows();
    inputs.push_back(p.index);
  }
  Tensor out(mat(rows, c));
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.numel();
  }
  return g.record("concat", std::move(out), inputs, [inputs](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad_buffer(self);
    std::size_t off = 0;
    for (std::size_t in : inputs) {
      const std::size_t n = gr.value_at(in).numel();
      if (gr.needs_grad_at(in)) {
        Tensor& d = gr.grad_buffer(in);
        for (std::size_t i = 0; i < n; ++i) d[i] += dy[off + i];
      }
      off += n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Graph& g = *parts.front().graph;
  const std::size_t r = parts.front().value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> inputs;
  for (const Var& p : parts) {
    if (p.graph != &g) throw std::invalid_argument("concat: operands on different graphs");
    if (p.value().rows() != r) mismatch("concat", parts.front().value(), p.value());
    cols += p.value().cols();
    inputs.push_back(p.index);
  }
  Tensor out(mat(r, cols));
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t c = v.cols();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[i * cols + offset + j] = v[i * c + j];
    }
    offset += c;
  }
  return g.record("concat", std::move(out), inputs, [inputs, cols, r](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad_buffer(self);
    std::size_t off = 0;
    for (std::size_t in : inputs) {
      const std::size_t c = gr.value_at(in).cols();
      if (gr.needs_grad_at(in)) {
        Tensor& d = gr.grad_buffer(in);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) d[i * c + j] += dy[i * cols + off + j];
        }
      }
      off += c;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  if (begin > end || end > A.rows()) {
    throw ShapeError("slice: rows [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_string(A.shape()));
  }
  std::vector<std::size_t> rows(end - begin);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
  return gather_rows(a, rows);
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  if (begin > end || end > A.cols()) {
    throw ShapeError("slice: cols [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_string(A.shape()));
  }
  const std::size_t r = A.rows();
  const std::size_t c = A.cols();
  const std::size_t w = end - begin;
  Tensor out(mat(r, w));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = A[i * c + begin + j];
  }
  return g.record("slice", std::move(out), {a.index}, [ai = a.index, r, c, w, begin](Graph& gr, std::size_t self) {
    if (!gr.needs_grad_at(ai)) return;
    const Tensor& dy = gr.grad_buffer(self);
    Tensor& d = gr.grad_buffer(ai);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) d[i * c + begin + j] += dy[i * w + j];
    }
  });
}

Var gather_rows(Var a, const std::vector<std::size_t>& rows) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const std::size_t c = A.cols();
  Tensor out(mat(rows.size(), c));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= A.rows()) {
      throw ShapeError("slice: row " + std::to_string(rows[i]) + " out of range for " + shape_string(A.shape()));
    }
    std::copy_n(A.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * c), c,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return g.record("slice", std::move(out), {a.index}, [ai = a.index, rows, c](Graph& gr, std::size_t self) {
    if (!gr.needs_grad_at(ai)) return;
    const Tensor& dy = gr.grad_buffer(self);
    Tensor& d = gr.grad_buffer(ai);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) d[rows[i] * c + j] += dy[i * c + j];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  Tensor out(shape, std::vector<double>(A.data().begin(), A.data().end()));
  return g.record("reshape", std::move(out), {a.index}, [ai = a.index](Graph& gr, std::size_t self) {
    const Tensor dy = gr.grad_buffer(self);
    accumulate(gr, ai, dy);
  });
}

Var transpose(Var a) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const std::size_t r = A.rows();
  const std::size_t c = A.cols();
  Tensor out(mat(c, r));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
  }
  return g.record("transpose", std::move(out), {a.index}, [ai = a.index, r, c](Graph& gr, std::size_t self) {
    if (!gr.needs_grad_at(ai)) return;
    const Tensor& dy = gr.grad_buffer(self);
    Tensor& d = gr.grad_buffer(ai);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += dy[j * r + i];
    }
  });
}

Var softmax_lastdim(Var a) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const std::size_t r = A.rows();
  const std::size_t c = A.cols();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = A.data().data() + i * c;
    double* y = out.data().data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= total;
  }
  return g.record("softmax_lastdim", std::move(out), {a.index}, [ai = a.index, r, c](Graph& gr, std::size_t self) {
    if (!gr.needs_grad_at(ai)) return;
    const Tensor& dy = gr.grad_buffer(self);
    const Tensor& y = gr.value_at(self);
    Tensor& d = gr.grad_buffer(ai);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += dy[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += y[i * c + j] * (dy[i * c + j] - dot);
    }
  });
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  Graph& g = same_graph({a, gamma, beta}, "layer_norm");
  const Tensor& A = a.value();
  const Tensor& G = gamma.value();
  const Tensor& Bt = beta.value();
  const std::size_t r = A.rows();
  const std::size_t c = A.cols();
  if (G.numel() != c || Bt.numel() != c) mismatch("layer_norm", A, G);
  Tensor out(A.shape());
  // Normalized activations and inverse std are kept for the backward rule.
  Tensor xhat(A.shape());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = A.data().data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += x[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (x[j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * G[j] + Bt[j];
    }
  }
  return g.record("layer_norm", std::move(out), {a.index, gamma.index, beta.index},
                  [ai = a.index, gi = gamma.index, bi = beta.index, xhat = std::move(xhat), inv_std = std::move(inv_std), r,
                   c](Graph& gr, std::size_t self) {
                    const Tensor& dy = gr.grad_buffer(self);
                    const Tensor& G = gr.value_at(gi);
                    if (gr.needs_grad_at(gi)) {
                      Tensor& dg = gr.grad_buffer(gi);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) dg[j] += dy[i * c + j] * xhat[i * c + j];
                    }
                    if (gr.needs_grad_at(bi)) {
                      Tensor& db = gr.grad_buffer(bi);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) db[j] += dy[i * c + j];
                    }
                    if (gr.needs_grad_at(ai)) {
                      Tensor& dx = gr.grad_buffer(ai);
                      const double n = static_cast<double>(c);
                      for (std::size_t i = 0; i < r; ++i) {
                        double s1 = 0.0;
                        double s2 = 0.0;
                        for (std::size_t j = 0; j < c; ++j) {
                          const double dxh = dy[i * c + j] * G[j];
                          s1 += dxh;
                          s2 += dxh * xhat[i * c + j];
                        }
                        for (std::size_t j = 0; j < c; ++j) {
                          const double dxh = dy[i * c + j] * G[j];
                          dx[i * c + j] += inv_std[i] * (dxh - s1 / n - xhat[i * c + j] * s2 / n);
                        }
                      }
                    }
                  });
}

Var gelu(Var a) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return g.record("gelu", std::move(out), {a.index}, elementwise_backward(a.index, [](double x, double) {
                    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
                    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
                    return cdf + x * pdf;
                  }));
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var sigmoid(Var a) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (double& v : out.data()) v = stable_sigmoid(v);
  return g.record("sigmoid", std::move(out), {a.index},
                  elementwise_backward(a.index, [](double, double y) { return y * (1.0 - y); }));
}

Var reciprocal(Var a) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (double& v : out.data()) v = 1.0 / v;
  return g.record("reciprocal", std::move(out), {a.index},
                  elementwise_backward(a.index, [](double, double y) { return -y * y; }));
}

Var sum(Var a) {
  Graph& g = *a.graph;
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return g.record("sum", Tensor::scalar(total), {a.index}, [ai = a.index](Graph& gr, std::size_t self) {
    if (!gr.needs_grad_at(ai)) return;
    const double dy = gr.grad_buffer(self)[0];
    for (double& d : gr.grad_buffer(ai).data()) d += dy;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().numel();
  if (n == 0) throw ShapeError("mean: empty tensor");
  Graph& g = *a.graph;
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return g.record("mean", Tensor::scalar(total / static_cast<double>(n)), {a.index}, [ai = a.index, n](Graph& gr, std::size_t self) {
    if (!gr.needs_grad_at(ai)) return;
    const double dy = gr.grad_buffer(self)[0] / static_cast<double>(n);
    for (double& d : gr.grad_buffer(ai).data()) d += dy;
  });
}

Var l1(Var a) {
  Graph& g = *a.graph;
  double total = 0.0;
  for (double v : a.value().data()) total += std::abs(v);
  return g.record("l1", Tensor::scalar(total), {a.index}, [ai = a.index](Graph& gr, std::size_t self) {
    if (!gr.needs_grad_at(ai)) return;
    const double dy = gr.grad_buffer(self)[0];
    const Tensor& x = gr.value_at(ai);
    Tensor& d = gr.grad_buffer(ai);
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] += dy * static_cast<double>((x[i] > 0) - (x[i] < 0));
  });
}

Var l2_norm(Var a) {
  Graph& g = *a.graph;
  double sq = 0.0;
  for (double v : a.value().data()) sq += v * v;
  const double norm = std::sqrt(sq);
  return g.record("l2_norm", Tensor::scalar(norm), {a.index}, [ai = a.index, norm](Graph& gr, std::size_t self) {
    // Subgradient 0 at the origin.
    if (!gr.needs_grad_at(ai) || norm == 0.0) return;
    const double dy = gr.grad_buffer(self)[0];
    const Tensor& x = gr.value_at(ai);
    Tensor& d = gr.grad_buffer(ai);
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] += dy * x[i] / norm;
  });
}

Var bce_with_logits(Var logits, const Tensor& targets) {
  Graph& g = *logits.graph;
  const Tensor& X = logits.value();
  if (X.numel() != targets.numel()) mismatch("bce_with_logits", X, targets);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.numel(); ++i) {
    const double x = X[i];
    // -[t log s(x) + (1-t) log(1-s(x))] = max(x,0) - t x + log(1 + exp(-|x|))
    out[i] = std::max(x, 0.0) - targets[i] * x + std::log1p(std::exp(-std::abs(x)));
  }
  return g.record("bce_with_logits", std::move(out), {logits.index}, [li = logits.index, targets](Graph& gr, std::size_t self) {
    if (!gr.needs_grad_at(li)) return;
    const Tensor& dy = gr.grad_buffer(self);
    const Tensor& x = gr.value_at(li);
    Tensor& d = gr.grad_buffer(li);
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] += dy[i] * (stable_sigmoid(x[i]) - targets[i]);
  });
}

Var pairwise_sq_dist(Var a, Var b) {
  Graph& g = same_graph({a, b}, "pairwise_sq_dist");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.cols()) mismatch("pairwise_sq_dist", A, B);
  const std::size_t n = A.rows();
  const std::size_t m = B.rows();
  const std::size_t d = A.cols();
  Tensor out(mat(n, m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = A[i * d + k] - B[j * d + k];
        s += diff * diff;
      }
      out[i * m + j] = s;
    }
  }
  return g.record("pairwise_sq_dist", std::move(out), {a.index, b.index},
                  [ai = a.index, bi = b.index, n, m, d](Graph& gr, std::size_t self) {
                    const Tensor& dy = gr.grad_buffer(self);
                    const Tensor& A = gr.value_at(ai);
                    const Tensor& B = gr.value_at(bi);
                    const bool ga = gr.needs_grad_at(ai);
                    const bool gb = gr.needs_grad_at(bi);
                    // Buffers are fetched before the loops; ai may equal bi.
                    Tensor* da = ga ? &gr.grad_buffer(ai) : nullptr;
                    Tensor* db = gb ? &gr.grad_buffer(bi) : nullptr;
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < m; ++j) {
                        const double w = 2.0 * dy[i * m + j];
                        for (std::size_t k = 0; k < d; ++k) {
                          const double diff = A[i * d + k] - B[j * d + k];
                          if (da) (*da)[i * d + k] += w * diff;
                          if (db) (*db)[j * d + k] -= w * diff;
                        }
                      }
                    }
                  });
}

Var outer_sum_rows(Var u, Var v) {
  Graph& g = same_graph({u, v}, "outer_sum_rows");
  const Tensor& U = u.value();
  const Tensor& V = v.value();
  if (U.cols() != V.cols()) mismatch("outer_sum_rows", U, V);
  const std::size_t n = U.rows();
  const std::size_t m = V.rows();
  const std::size_t h = U.cols();
  Tensor out(mat(n * m, h));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < h; ++k) out[(i * m + j) * h + k] = U[i * h + k] + V[j * h + k];
    }
  }
  return g.record("outer_sum_rows", std::move(out), {u.index, v.index},
                  [ui = u.index, vi = v.index, n, m, h](Graph& gr, std::size_t self) {
                    const Tensor& dy = gr.grad_buffer(self);
                    Tensor* du = gr.needs_grad_at(ui) ? &gr.grad_buffer(ui) : nullptr;
                    Tensor* dv = gr.needs_grad_at(vi) ? &gr.grad_buffer(vi) : nullptr;
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < m; ++j) {
                        for (std::size_t k = 0; k < h; ++k) {
                          const double x = dy[(i * m + j) * h + k];
                          if (du) (*du)[i * h + k] += x;
                          if (dv) (*dv)[j * h + k] += x;
                        }
                      }
                    }
                  });
}

}  // namespace lgwae::ad
