// Copyright 2026 The cmirm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cmirm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "cmirm/error.hpp"

namespace cmirm {

const Tensor& BackwardContext::out_value() const {
  return graph_.nodes_[node_].value;
}
const Tensor& BackwardContext::out_grad() const {
  return graph_.nodes_[node_].grad;
}
const Tensor& BackwardContext::in_value(std::size_t i) const {
  return graph_.nodes_[graph_.nodes_[node_].inputs[i]].value;
}
Tensor* BackwardContext::in_grad(std::size_t i) {
  auto& in = graph_.nodes_[graph_.nodes_[node_].inputs[i]];
  return in.requires_grad ? &in.grad : nullptr;
}
std::size_t BackwardContext::num_inputs() const {
  return graph_.nodes_[node_].inputs.size();
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var{nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.backward = std::move(backward);
  n.inputs.reserve(inputs.size());
  for (auto v : inputs) {
    const auto& in = node(v);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || in.requires_grad;
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to graph");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

const Tensor& Graph::grad(Var v) const {
  const auto& n = node(v);
  if (n.grad.empty()) throw ContractError("gradient requested before backward()");
  return n.grad;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

const std::vector<std::size_t>& Graph::inputs(Var v) const {
  return node(v).inputs;
}

void Graph::backward(Var loss) {
  const auto& l = node(loss);
  if (l.value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_string(l.value.shape()));
  }
  for (auto& n : nodes_) {
    if (n.requires_grad || n.inputs.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  }
  nodes_[loss.id].grad.fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    BackwardContext ctx(*this, i);
    n.backward(ctx);
  }
}

void Graph::truncate(std::size_t size) {
  if (size < nodes_.size()) nodes_.resize(size);
}

namespace ops {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected matrix, got " +
                     shape_string(a.shape()));
  }
}

// Elementwise unary op; `deriv` maps (x, y) to dy/dx.
template <class F, class D>
Var unary(Graph& g, Var a, F f, D deriv) {
  const Tensor& x = g.value(a);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return g.record(std::move(y), {a}, [deriv](BackwardContext& c) {
    Tensor* gx = c.in_grad(0);
    if (!gx) return;
    const Tensor& x = c.in_value(0);
    const Tensor& y = c.out_value();
    const Tensor& gy = c.out_grad();
    for (std::size_t i = 0; i < x.size(); ++i) (*gx)[i] += gy[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require_matrix(A, "matmul");
  require_matrix(B, "matmul");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(A.shape()) +
                     " x " + shape_string(B.shape()));
  }
  Tensor C({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &C[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B.data().data() + (p * n);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return g.record(std::move(C), {a, b}, [m, k, n](BackwardContext& c) {
    const Tensor& A = c.in_value(0);
    const Tensor& B = c.in_value(1);
    const Tensor& G = c.out_grad();
    if (Tensor* gA = c.in_grad(0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G.data().data() + (i * n);
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B.data().data() + (p * n);
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          (*gA)[i * k + p] += acc;
        }
      }
    }
    if (Tensor* gB = c.in_grad(1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G.data().data() + (i * n);
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          double* gbrow = &(*gB)[p * n];
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Var transpose(Graph& g, Var a) {
  const Tensor& A = g.value(a);
  require_matrix(A, "transpose");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor T({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) T[j * m + i] = A[i * n + j];
  return g.record(std::move(T), {a}, [m, n](BackwardContext& c) {
    Tensor* gA = c.in_grad(0);
    if (!gA) return;
    const Tensor& G = c.out_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*gA)[i * n + j] += G[j * m + i];
  });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require_same_shape(A, B, "add");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  return g.record(std::move(C), {a, b}, [](BackwardContext& c) {
    const Tensor& G = c.out_grad();
    for (std::size_t s = 0; s < 2; ++s) {
      if (Tensor* gi = c.in_grad(s))
        for (std::size_t i = 0; i < G.size(); ++i) (*gi)[i] += G[i];
    }
  });
}

Var sub(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require_same_shape(A, B, "sub");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] -= B[i];
  return g.record(std::move(C), {a, b}, [](BackwardContext& c) {
    const Tensor& G = c.out_grad();
    if (Tensor* ga = c.in_grad(0))
      for (std::size_t i = 0; i < G.size(); ++i) (*ga)[i] += G[i];
    if (Tensor* gb = c.in_grad(1))
      for (std::size_t i = 0; i < G.size(); ++i) (*gb)[i] -= G[i];
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require_same_shape(A, B, "mul");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  return g.record(std::move(C), {a, b}, [](BackwardContext& c) {
    const Tensor& G = c.out_grad();
    const Tensor& A = c.in_value(0);
    const Tensor& B = c.in_value(1);
    if (Tensor* ga = c.in_grad(0))
      for (std::size_t i = 0; i < G.size(); ++i) (*ga)[i] += G[i] * B[i];
    if (Tensor* gb = c.in_grad(1))
      for (std::size_t i = 0; i < G.size(); ++i) (*gb)[i] += G[i] * A[i];
  });
}

Var add_bias(Graph& g, Var a, Var bias) {
  const Tensor& A = g.value(a);
  const Tensor& b = g.value(bias);
  require_matrix(A, "add_bias");
  const std::size_t m = A.rows(), n = A.cols();
  if (b.size() != n) {
    throw ShapeError("add_bias: bias " + shape_string(b.shape()) +
                     " does not match " + shape_string(A.shape()));
  }
  Tensor C = A;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C[i * n + j] += b[j];
  return g.record(std::move(C), {a, bias}, [m, n](BackwardContext& c) {
    const Tensor& G = c.out_grad();
    if (Tensor* ga = c.in_grad(0))
      for (std::size_t i = 0; i < G.size(); ++i) (*ga)[i] += G[i];
    if (Tensor* gb = c.in_grad(1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += G[i * n + j];
  });
}

Var scale(Graph& g, Var a, double factor) { return affine(g, a, factor, 0.0); }

Var affine(Graph& g, Var a, double factor, double offset) {
  return unary(
      g, a, [factor, offset](double x) { return x * factor + offset; },
      [factor](double, double) { return factor; });
}

Var gelu(Graph& g, Var a) {
  return unary(
      g, a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi /
                           std::numbers::sqrt2;
        return cdf + x * pdf;
      });
}

Var tanh(Graph& g, Var a) {
  return unary(
      g, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var softplus(Graph& g, Var a) {
  return unary(
      g, a,
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

Var square(Graph& g, Var a) {
  return unary(
      g, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax_rows(Graph& g, Var a) {
  const Tensor& A = g.value(a);
  require_matrix(A, "softmax_rows");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor Y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto x = A.row(i);
    auto y = Y.row(i);
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= total;
  }
  return g.record(std::move(Y), {a}, [m, n](BackwardContext& c) {
    Tensor* ga = c.in_grad(0);
    if (!ga) return;
    const Tensor& Y = c.out_value();
    const Tensor& G = c.out_grad();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += G[i * n + j] * Y[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        (*ga)[i * n + j] += Y[i * n + j] * (G[i * n + j] - dot);
    }
  });
}

Var layer_norm(Graph& g, Var a, Var gain, Var bias, double eps) {
  const Tensor& A = g.value(a);
  const Tensor& gam = g.value(gain);
  const Tensor& bet = g.value(bias);
  require_matrix(A, "layer_norm");
  const std::size_t m = A.rows(), n = A.cols();
  if (gam.size() != n || bet.size() != n) {
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(n) +
                     " entries");
  }
  Tensor Y({m, n});
  // Cache normalized values and inverse std for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += A[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = A[i * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (A[i * n + j] - mean) * rs;
      (*xhat)[i * n + j] = h;
      Y[i * n + j] = h * gam[j] + bet[j];
    }
  }
  return g.record(std::move(Y), {a, gain, bias},
                  [m, n, xhat, inv_std](BackwardContext& c) {
    const Tensor& G = c.out_grad();
    const Tensor& gam = c.in_value(1);
    if (Tensor* gg = c.in_grad(1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gg)[j] += G[i * n + j] * (*xhat)[i * n + j];
    if (Tensor* gb = c.in_grad(2))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += G[i * n + j];
    Tensor* ga = c.in_grad(0);
    if (!ga) return;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i) {
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = G[i * n + j] * gam[j];
        mean_d += d;
        mean_dx += d * (*xhat)[i * n + j];
      }
      mean_d *= inv_n;
      mean_dx *= inv_n;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = G[i * n + j] * gam[j];
        (*ga)[i * n + j] += (*inv_std)[i] * (d - mean_d - (*xhat)[i * n + j] * mean_dx);
      }
    }
  });
}

Var slice_rows(Graph& g, Var a, std::size_t start, std::size_t count) {
  const Tensor& A = g.value(a);
  require_matrix(A, "slice_rows");
  const std::size_t n = A.cols();
  if (count == 0 || start + count > A.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " +
                     shape_string(A.shape()));
  }
  Tensor Y({count, n});
  std::copy_n(A.data().data() + (start * n), count * n, &Y[0]);
  return g.record(std::move(Y), {a}, [start, count, n](BackwardContext& c) {
    Tensor* ga = c.in_grad(0);
    if (!ga) return;
    const Tensor& G = c.out_grad();
    for (std::size_t i = 0; i < count * n; ++i) (*ga)[start * n + i] += G[i];
  });
}

Var slice_cols(Graph& g, Var a, std::size_t start, std::size_t count) {
  const Tensor& A = g.value(a);
  require_matrix(A, "slice_cols");
  const std::size_t m = A.rows(), n = A.cols();
  if (count == 0 || start + count > n) {
    throw ShapeError("slice_cols: range outside " + shape_string(A.shape()));
  }
  Tensor Y({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) Y[i * count + j] = A[i * n + start + j];
  return g.record(std::move(Y), {a}, [m, n, start, count](BackwardContext& c) {
    Tensor* ga = c.in_grad(0);
    if (!ga) return;
    const Tensor& G = c.out_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) (*ga)[i * n + start + j] += G[i * count + j];
  });
}

Var concat_rows(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = g.value(parts[0]).cols();
  std::size_t m = 0;
  for (auto p : parts) {
    const Tensor& t = g.value(p);
    require_matrix(t, "concat_rows");
    if (t.cols() != n) throw ShapeError("concat_rows: column counts differ");
    m += t.rows();
  }
  Tensor Y({m, n});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (auto p : parts) {
    const Tensor& t = g.value(p);
    offsets.push_back(off);
    std::copy(t.data().begin(), t.data().end(), &Y[off]);
    off += t.size();
  }
  return g.record(std::move(Y), {parts.begin(), parts.end()},
                  [offsets](BackwardContext& c) {
    const Tensor& G = c.out_grad();
    for (std::size_t s = 0; s < c.num_inputs(); ++s) {
      Tensor* gs = c.in_grad(s);
      if (!gs) continue;
      for (std::size_t i = 0; i < gs->size(); ++i) (*gs)[i] += G[offsets[s] + i];
    }
  });
}

Var concat_cols(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = g.value(parts[0]).rows();
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  for (auto p : parts) {
    const Tensor& t = g.value(p);
    require_matrix(t, "concat_cols");
    if (t.rows() != m) throw ShapeError("concat_cols: row counts differ");
    offsets.push_back(n);
    n += t.cols();
  }
  Tensor Y({m, n});
  for (std::size_t s = 0; s < parts.size(); ++s) {
    const Tensor& t = g.value(parts[s]);
    const std::size_t w = t.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) Y[i * n + offsets[s] + j] = t[i * w + j];
  }
  return g.record(std::move(Y), {parts.begin(), parts.end()},
                  [offsets, m, n](BackwardContext& c) {
    const Tensor& G = c.out_grad();
    for (std::size_t s = 0; s < c.num_inputs(); ++s) {
      Tensor* gs = c.in_grad(s);
      if (!gs) continue;
      const std::size_t w = gs->cols();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) (*gs)[i * w + j] += G[i * n + offsets[s] + j];
    }
  });
}

Var mean_rows(Graph& g, Var a) {
  Tensor y = mean_pool(g.value(a));
  const std::size_t m = g.value(a).rows(), n = g.value(a).cols();
  return g.record(std::move(y), {a}, [m, n](BackwardContext& c) {
    Tensor* ga = c.in_grad(0);
    if (!ga) return;
    const Tensor& G = c.out_grad();
    const double w = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += G[j] * w;
  });
}

Var sum(Graph& g, Var a) {
  double total = 0.0;
  for (double v : g.value(a).data()) total += v;
  return g.record(Tensor::scalar(total), {a}, [](BackwardContext& c) {
    Tensor* ga = c.in_grad(0);
    if (!ga) return;
    const double gy = c.out_grad()[0];
    for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += gy;
  });
}

Var element(Graph& g, Var a, std::size_t index) {
  const Tensor& A = g.value(a);
  if (index >= A.size()) throw ShapeError("element: index out of range");
  return g.record(Tensor::scalar(A[index]), {a}, [index](BackwardContext& c) {
    if (Tensor* ga = c.in_grad(0)) (*ga)[index] += c.out_grad()[0];
  });
}

Var reshape(Graph& g, Var a, Shape shape) {
  const Tensor& A = g.value(a);
  if (shape_size(shape) != A.size()) {
    throw ShapeError("reshape: " + shape_string(A.shape()) + " -> " + shape_string(shape));
  }
  Tensor Y(std::move(shape), std::vector<double>(A.data().begin(), A.data().end()));
  return g.record(std::move(Y), {a}, [](BackwardContext& c) {
    Tensor* ga = c.in_grad(0);
    if (!ga) return;
    const Tensor& G = c.out_grad();
    for (std::size_t i = 0; i < G.size(); ++i) (*ga)[i] += G[i];
  });
}

}  // namespace ops

Tensor mean_pool(const Tensor& x) {
  if (x.empty() || x.rank() != 2) {
    throw ContractError("mean_pool needs a non-empty [seq, dim] tensor");
  }
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j] += x[i * n + j];
  for (std::size_t j = 0; j < n; ++j) y[j] /= static_cast<double>(m);
  return y;
}

Var mean_pool(Graph& g, Var x) { return ops::mean_rows(g, x); }

}  // namespace cmirm
