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

#ifndef CMIRM_AUTODIFF_HPP_
#define CMIRM_AUTODIFF_HPP_

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "cmirm/tensor.hpp"

namespace cmirm {

// Handle to a node in a Graph. Only meaningful for the graph that issued it.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Graph;

// View handed to a node's backward function. Input gradients are null for
// inputs that do not require gradients.
class BackwardContext {
 public:
  const Tensor& out_value() const;
  const Tensor& out_grad() const;
  const Tensor& in_value(std::size_t i) const;
  Tensor* in_grad(std::size_t i);
  std::size_t num_inputs() const;

 private:
  friend class Graph;
  BackwardContext(Graph& graph, std::size_t node) : graph_(graph), node_(node) {}
  Graph& graph_;
  std::size_t node_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

// Tape of operations for reverse-mode differentiation. Nodes are appended in
// creation order, which is always a topological order. A graph is owned by a
// single training step or inference call and is not shared across threads.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Tensor value);
  // Leaf that receives a gradient on backward().
  Var parameter(Tensor value);
  // Interior node. requires_grad is inherited from the inputs.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  // Gradient after backward(); zero-filled for nodes the loss does not reach.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::size_t>& inputs(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and propagates to every node. The loss must be a
  // one-element tensor. May be called repeatedly; gradients are recomputed.
  void backward(Var loss);

  // Drops every node created after the first `size` nodes. Used to reuse
  // bound parameters across independent inference passes.
  void truncate(std::size_t size);

 private:
  friend class BackwardContext;
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  const Node& node(Var v) const;
  std::deque<Node> nodes_;
};

// Differentiable operations. Shapes are checked eagerly and mismatches raise
// ShapeError.
namespace ops {

Var matmul(Graph& g, Var a, Var b);     // [m,k] x [k,n]
Var transpose(Graph& g, Var a);         // [m,n] -> [n,m]
Var add(Graph& g, Var a, Var b);        // same shape
Var sub(Graph& g, Var a, Var b);        // same shape
Var mul(Graph& g, Var a, Var b);        // elementwise, same shape
Var add_bias(Graph& g, Var a, Var bias);  // [m,n] + [n] per row
Var scale(Graph& g, Var a, double factor);
Var affine(Graph& g, Var a, double factor, double offset);  // a*factor+offset
Var gelu(Graph& g, Var a);              // exact erf form
Var tanh(Graph& g, Var a);
Var softplus(Graph& g, Var a);          // log(1 + exp(a)), stable
Var square(Graph& g, Var a);
Var softmax_rows(Graph& g, Var a);
Var layer_norm(Graph& g, Var a, Var gain, Var bias, double eps = 1e-5);
Var slice_rows(Graph& g, Var a, std::size_t start, std::size_t count);
Var slice_cols(Graph& g, Var a, std::size_t start, std::size_t count);
Var concat_rows(Graph& g, std::span<const Var> parts);
Var concat_cols(Graph& g, std::span<const Var> parts);
Var mean_rows(Graph& g, Var a);         // [m,n] -> [n]
Var sum(Graph& g, Var a);               // any -> [1]
Var element(Graph& g, Var a, std::size_t index);  // any -> [1]
Var reshape(Graph& g, Var a, Shape shape);        // same element count

}  // namespace ops

// Arithmetic mean over the time axis of a [seq, dim] tensor. Throws
// ContractError when the tensor is empty or not rank 2.
Tensor mean_pool(const Tensor& x);
Var mean_pool(Graph& g, Var x);

}  // namespace cmirm

#endif  // CMIRM_AUTODIFF_HPP_
