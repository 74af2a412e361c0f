// Copyright 2026 The PDPA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records primitive operations in execution order. Every primitive
// checks its input shapes and the finiteness of its output, so a NaN or Inf
// is reported at the operation that produced it rather than at the loss.
// Backward() walks the record once in reverse, accumulating gradients
// additively into each input, which handles fan-out.
//
// Tapes are single-owner and not thread-safe. Independent tapes can run on
// different threads; Watch() leaves only read the watched tensor.

#ifndef PDPA_AUTODIFF_H_
#define PDPA_AUTODIFF_H_

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "pdpa/tensor.h"

namespace pdpa::ad {

class Tape;

// Handle to a value recorded on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t index() const { return index_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  // Propagates `out_grad` (the gradient of the node's output `out_value`)
  // into the gradients of the node's inputs.
  using BackwardFn = std::function<void(Tape& tape, const Tensor& out_value,
                                        const Tensor& out_grad)>;

  // With recording off, operations still compute values but keep no
  // backward record; Backward() then fails.
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Tensor value);
  // Leaf that refers to `value` without copying; `value` must outlive the
  // tape and stay unmodified while it is in use.
  Var Watch(const Tensor& value, bool requires_grad = true);
  // Owned leaf that requires a gradient.
  Var Variable(Tensor value);

  void Backward(Var loss);

  // Gradient of the last Backward() loss with respect to `v`. Nodes the loss
  // does not depend on report an all-zero tensor of the right shape.
  Tensor Grad(Var v) const;
  bool HasGrad(Var v) const;
  // Accumulated gradient without copying, or nullptr when none was produced.
  const Tensor* FindGrad(Var v) const;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Primitive-implementation API.
  Var Record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var Record(std::string_view op, Tensor value, std::span<const Var> inputs,
             BackwardFn backward);
  bool RequiresGrad(std::size_t index) const { return nodes_[index].requires_grad; }
  // Gradient accumulator of node `index`, zero-initialized on first access.
  Tensor& GradBuffer(std::size_t index);
  const Tensor& ValueAt(std::size_t index) const;

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
    Tensor grad;
    bool has_grad = false;
  };

  Var Push(Node node);

  // std::deque keeps references returned by Var::value() stable across pushes.
  std::deque<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
};

// ---- Primitives ------------------------------------------------------------
// Matrices are rank-2 tensors. Row-vector arguments (biases, gains, scaling
// vectors) may be rank 1 or shape [1, n].

Var MatMul(Var a, Var b);            // [m,k] x [k,n]
Var MatMulTransposed(Var a, Var b);  // [m,k] x [n,k]^T
Var Add(Var a, Var b);               // same shape
Var AddBias(Var x, Var bias);        // [m,n] + [n] broadcast over rows
Var Mul(Var a, Var b);               // elementwise, same shape
Var ScaleColumns(Var x, Var scale);  // [m,n] * [n] broadcast over rows
Var Scale(Var x, double factor);
Var Softmax(Var x);  // row-wise, max-subtracted
Var LayerNorm(Var x, Var gain, Var bias, double epsilon = 1e-12);
Var Gelu(Var x);  // tanh approximation
Var Relu(Var x);
Var Tanh(Var x);
// Rows of `table` selected by `ids`: [ids.size(), table.cols].
Var Embedding(Var table, std::span<const int> ids);
// Per-row softmax cross-entropy: [m,c] logits -> [m] losses.
Var CrossEntropyWithLogits(Var logits, std::span<const int> labels);
// Elementwise product with a constant mask (dropout, padding masks).
Var ApplyMask(Var x, const Tensor& mask);
Var SliceColumns(Var x, std::size_t begin, std::size_t count);
Var ConcatColumns(std::span<const Var> parts);
Var SelectRow(Var x, std::size_t row);  // -> [1,n]
Var MeanRows(Var x);                    // -> [1,n]
Var Sum(Var x);                         // -> scalar
Var Mean(Var x);                        // -> scalar

// Scalar GELU with the tanh approximation, shared with tests and kernels.
double GeluScalar(double x);

}  // namespace pdpa::ad

#endif  // PDPA_AUTODIFF_H_
