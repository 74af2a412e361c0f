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

#include "pdpa/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pdpa/errors.h"

namespace pdpa::ad {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap AsMatrix(const Tensor& t) {
  return ConstMap(t.raw(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap AsMatrix(Tensor& t) {
  return MutMap(t.raw(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void ShapeMismatch(std::string_view op, const Shape& a,
                                const Shape& b) {
  throw ContractError(std::string(op) + ": shape mismatch " + ShapeToString(a) +
                      " vs " + ShapeToString(b));
}

void RequireMatrix(std::string_view op, const Tensor& t) {
  if (t.rank() != 2) {
    throw ContractError(std::string(op) + ": expected a matrix, got shape " +
                        ShapeToString(t.shape()));
  }
}

void RequireSameTape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw ContractError("operands recorded on different tapes");
  }
}

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->ValueAt(index_);
}

const Tensor& Tape::ValueAt(std::size_t index) const {
  const Node& n = nodes_[index];
  return n.external != nullptr ? *n.external : n.owned;
}

Var Tape::Push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::Constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return Push(std::move(n));
}

Var Tape::Watch(const Tensor& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad && recording_;
  return Push(std::move(n));
}

Var Tape::Variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = recording_;
  return Push(std::move(n));
}

Var Tape::Record(std::string_view op, Tensor value,
                 std::initializer_list<Var> inputs, BackwardFn backward) {
  return Record(op, std::move(value),
                std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::Record(std::string_view op, Tensor value, std::span<const Var> inputs,
                 BackwardFn backward) {
  if (!value.AllFinite()) {
    throw NumericError(std::string(op) + ": non-finite output");
  }
  Node n;
  n.owned = std::move(value);
  if (recording_) {
    for (const Var& in : inputs) {
      if (in.tape() != this) {
        throw ContractError(std::string(op) + ": input from another tape");
      }
      n.requires_grad = n.requires_grad || nodes_[in.index()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return Push(std::move(n));
}

Tensor& Tape::GradBuffer(std::size_t index) {
  Node& n = nodes_[index];
  if (!n.has_grad) {
    n.grad = Tensor(ValueAt(index).shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::Backward(Var loss) {
  if (!recording_) throw ContractError("backward: tape was not recorded");
  if (backward_done_) throw ContractError("backward: tape already consumed");
  if (loss.tape() != this) throw ContractError("backward: loss from another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        ShapeToString(loss.shape()));
  }
  backward_done_ = true;
  GradBuffer(loss.index())[0] = 1.0;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, ValueAt(i), n.grad);
  }
}

bool Tape::HasGrad(Var v) const { return nodes_[v.index()].has_grad; }

const Tensor* Tape::FindGrad(Var v) const {
  const Node& n = nodes_[v.index()];
  return n.has_grad ? &n.grad : nullptr;
}

Tensor Tape::Grad(Var v) const {
  const Node& n = nodes_[v.index()];
  if (n.has_grad) return n.grad;
  return Tensor(ValueAt(v.index()).shape());
}

// ---- Primitives ------------------------------------------------------------

Var MatMul(Var a, Var b) {
  RequireSameTape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  RequireMatrix("matmul", av);
  RequireMatrix("matmul", bv);
  if (av.cols() != bv.rows()) ShapeMismatch("matmul", av.shape(), bv.shape());
  Tensor out({av.rows(), bv.cols()});
  AsMatrix(out).noalias() = AsMatrix(av) * AsMatrix(bv);
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape()->Record(
      "matmul", std::move(out), {a, b},
      [ai, bi](Tape& t, const Tensor&, const Tensor& g) {
        if (t.RequiresGrad(ai)) {
          AsMatrix(t.GradBuffer(ai)).noalias() +=
              AsMatrix(g) * AsMatrix(t.ValueAt(bi)).transpose();
        }
        if (t.RequiresGrad(bi)) {
          AsMatrix(t.GradBuffer(bi)).noalias() +=
              AsMatrix(t.ValueAt(ai)).transpose() * AsMatrix(g);
        }
      });
}

Var MatMulTransposed(Var a, Var b) {
  RequireSameTape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  RequireMatrix("matmul_t", av);
  RequireMatrix("matmul_t", bv);
  if (av.cols() != bv.cols()) ShapeMismatch("matmul_t", av.shape(), bv.shape());
  Tensor out({av.rows(), bv.rows()});
  AsMatrix(out).noalias() = AsMatrix(av) * AsMatrix(bv).transpose();
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape()->Record(
      "matmul_t", std::move(out), {a, b},
      [ai, bi](Tape& t, const Tensor&, const Tensor& g) {
        if (t.RequiresGrad(ai)) {
          AsMatrix(t.GradBuffer(ai)).noalias() +=
              AsMatrix(g) * AsMatrix(t.ValueAt(bi));
        }
        if (t.RequiresGrad(bi)) {
          AsMatrix(t.GradBuffer(bi)).noalias() +=
              AsMatrix(g).transpose() * AsMatrix(t.ValueAt(ai));
        }
      });
}

Var Add(Var a, Var b) {
  RequireSameTape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) ShapeMismatch("add", av.shape(), bv.shape());
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape()->Record(
      "add", std::move(out), {a, b},
      [ai, bi](Tape& t, const Tensor&, const Tensor& g) {
        for (std::size_t idx : {ai, bi}) {
          if (!t.RequiresGrad(idx)) continue;
          Tensor& dst = t.GradBuffer(idx);
          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        }
      });
}

Var AddBias(Var x, Var bias) {
  RequireSameTape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols() || bv.rows() != 1) {
    ShapeMismatch("add_bias", xv.shape(), bv.shape());
  }
  Tensor out = xv;
  const std::size_t n = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  }
  const std::size_t xi = x.index(), bi = bias.index();
  return x.tape()->Record(
      "add_bias", std::move(out), {x, bias},
      [xi, bi, n](Tape& t, const Tensor&, const Tensor& g) {
        if (t.RequiresGrad(xi)) {
          Tensor& dx = t.GradBuffer(xi);
          for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        }
        if (t.RequiresGrad(bi)) {
          Tensor& db = t.GradBuffer(bi);
          for (std::size_t i = 0; i < g.size(); ++i) db[i % n] += g[i];
        }
      });
}

Var Mul(Var a, Var b) {
  RequireSameTape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) ShapeMismatch("mul", av.shape(), bv.shape());
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape()->Record(
      "mul", std::move(out), {a, b},
      [ai, bi](Tape& t, const Tensor&, const Tensor& g) {
        if (t.RequiresGrad(ai)) {
          Tensor& da = t.GradBuffer(ai);
          const Tensor& bv = t.ValueAt(bi);
          for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
        }
        if (t.RequiresGrad(bi)) {
          Tensor& db = t.GradBuffer(bi);
          const Tensor& av = t.ValueAt(ai);
          for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
        }
      });
}

Var ScaleColumns(Var x, Var scale) {
  RequireSameTape(x, scale);
  const Tensor& xv = x.value();
  const Tensor& sv = scale.value();
  if (sv.size() != xv.cols() || sv.rows() != 1) {
    ShapeMismatch("scale_columns", xv.shape(), sv.shape());
  }
  Tensor out = xv;
  const std::size_t n = xv.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= sv[i % n];
  const std::size_t xi = x.index(), si = scale.index();
  return x.tape()->Record(
      "scale_columns", std::move(out), {x, scale},
      [xi, si, n](Tape& t, const Tensor&, const Tensor& g) {
        if (t.RequiresGrad(xi)) {
          Tensor& dx = t.GradBuffer(xi);
          const Tensor& sv = t.ValueAt(si);
          for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * sv[i % n];
        }
        if (t.RequiresGrad(si)) {
          Tensor& ds = t.GradBuffer(si);
          const Tensor& xv = t.ValueAt(xi);
          for (std::size_t i = 0; i < g.size(); ++i) ds[i % n] += g[i] * xv[i];
        }
      });
}

Var Scale(Var x, double factor) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  const std::size_t xi = x.index();
  return x.tape()->Record(
      "scale", std::move(out), {x},
      [xi, factor](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& dx = t.GradBuffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
      });
}

Var Softmax(Var x) {
  const Tensor& xv = x.value();
  Tensor out = xv;
  const std::size_t n = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double* row = out.raw() + r * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    for (std::size_t c = 0; c < n; ++c) row[c] /= total;
  }
  const std::size_t xi = x.index();
  return x.tape()->Record(
      "softmax", std::move(out), {x},
      [xi, n](Tape& t, const Tensor& y, const Tensor& g) {
        Tensor& dx = t.GradBuffer(xi);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          const std::size_t base = r * n;
          double dot = 0.0;
          for (std::size_t c = 0; c < n; ++c) dot += g[base + c] * y[base + c];
          for (std::size_t c = 0; c < n; ++c) {
            dx[base + c] += y[base + c] * (g[base + c] - dot);
          }
        }
      });
}

Var LayerNorm(Var x, Var gain, Var bias, double epsilon) {
  RequireSameTape(x, gain);
  RequireSameTape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols();
  if (gain.value().size() != n) ShapeMismatch("layer_norm", xv.shape(), gain.shape());
  if (bias.value().size() != n) ShapeMismatch("layer_norm", xv.shape(), bias.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  const std::size_t rows = xv.rows();
  std::vector<double> means(rows), inv_std(rows);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.raw() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + epsilon);
    means[r] = mean;
    inv_std[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = (row[c] - mean) * is * gv[c] + bv[c];
    }
  }
  const std::size_t xi = x.index(), gi = gain.index(), bi = bias.index();
  return x.tape()->Record(
      "layer_norm", std::move(out), {x, gain, bias},
      [xi, gi, bi, n, means = std::move(means), inv_std = std::move(inv_std)](
          Tape& t, const Tensor&, const Tensor& g) {
        const Tensor& xv = t.ValueAt(xi);
        const Tensor& gv = t.ValueAt(gi);
        const bool need_x = t.RequiresGrad(xi);
        const bool need_g = t.RequiresGrad(gi);
        const bool need_b = t.RequiresGrad(bi);
        std::vector<double> xhat(n), dxhat(n);
        for (std::size_t r = 0; r < means.size(); ++r) {
          const std::size_t base = r * n;
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            xhat[c] = (xv[base + c] - means[r]) * inv_std[r];
            dxhat[c] = g[base + c] * gv[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xhat[c];
          }
          mean_d /= static_cast<double>(n);
          mean_dx /= static_cast<double>(n);
          if (need_x) {
            Tensor& dx = t.GradBuffer(xi);
            for (std::size_t c = 0; c < n; ++c) {
              dx[base + c] += inv_std[r] * (dxhat[c] - mean_d - xhat[c] * mean_dx);
            }
          }
          if (need_g) {
            Tensor& dg = t.GradBuffer(gi);
            for (std::size_t c = 0; c < n; ++c) dg[c] += g[base + c] * xhat[c];
          }
          if (need_b) {
            Tensor& db = t.GradBuffer(bi);
            for (std::size_t c = 0; c < n; ++c) db[c] += g[base + c];
          }
        }
      });
}

double GeluScalar(double x) {
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluC * x * x * x)));
}

Var Gelu(Var x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = GeluScalar(out[i]);
  const std::size_t xi = x.index();
  return x.tape()->Record(
      "gelu", std::move(out), {x}, [xi](Tape& t, const Tensor&, const Tensor& g) {
        const Tensor& xv = t.ValueAt(xi);
        Tensor& dx = t.GradBuffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = xv[i];
          const double u = kSqrt2OverPi * (v + kGeluC * v * v * v);
          const double th = std::tanh(u);
          const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
          dx[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
        }
      });
}

Var Relu(Var x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
  const std::size_t xi = x.index();
  return x.tape()->Record(
      "relu", std::move(out), {x}, [xi](Tape& t, const Tensor& y, const Tensor& g) {
        Tensor& dx = t.GradBuffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (y[i] > 0.0) dx[i] += g[i];
        }
      });
}

Var Tanh(Var x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  const std::size_t xi = x.index();
  return x.tape()->Record(
      "tanh", std::move(out), {x}, [xi](Tape& t, const Tensor& y, const Tensor& g) {
        Tensor& dx = t.GradBuffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
      });
}

Var Embedding(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  RequireMatrix("embedding", tv);
  const std::size_t n = tv.cols();
  Tensor out({ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows()) {
      throw ContractError("embedding: id " + std::to_string(ids[r]) +
                          " out of range for table with " +
                          std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.raw() + ids[r] * n, n, out.raw() + r * n);
  }
  const std::size_t ti = table.index();
  return table.tape()->Record(
      "embedding", std::move(out), {table},
      [ti, n, ids = std::vector<int>(ids.begin(), ids.end())](
          Tape& t, const Tensor&, const Tensor& g) {
        Tensor& dt = t.GradBuffer(ti);
        for (std::size_t r = 0; r < ids.size(); ++r) {
          double* dst = dt.raw() + static_cast<std::size_t>(ids[r]) * n;
          for (std::size_t c = 0; c < n; ++c) dst[c] += g[r * n + c];
        }
      });
}

Var CrossEntropyWithLogits(Var logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  RequireMatrix("cross_entropy", lv);
  const std::size_t m = lv.rows(), c = lv.cols();
  if (labels.size() != m) {
    throw ContractError("cross_entropy: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(m) + " rows");
  }
  Tensor out({m});
  Tensor probs({m, c});
  for (std::size_t r = 0; r < m; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[r]) +
                          " out of range [0, " + std::to_string(c) + ")");
    }
    const double* row = lv.raw() + r * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      probs[r * c + k] = std::exp(row[k] - mx);
      total += probs[r * c + k];
    }
    for (std::size_t k = 0; k < c; ++k) probs[r * c + k] /= total;
    out[r] = mx + std::log(total) - row[labels[r]];
  }
  const std::size_t li = logits.index();
  return logits.tape()->Record(
      "cross_entropy", std::move(out), {logits},
      [li, c, probs = std::move(probs),
       labels = std::vector<int>(labels.begin(), labels.end())](
          Tape& t, const Tensor&, const Tensor& g) {
        Tensor& dl = t.GradBuffer(li);
        for (std::size_t r = 0; r < labels.size(); ++r) {
          for (std::size_t k = 0; k < c; ++k) {
            const double onehot = static_cast<int>(k) == labels[r] ? 1.0 : 0.0;
            dl[r * c + k] += g[r] * (probs[r * c + k] - onehot);
          }
        }
      });
}

Var ApplyMask(Var x, const Tensor& mask) {
  const Tensor& xv = x.value();
  if (mask.shape() != xv.shape()) ShapeMismatch("apply_mask", xv.shape(), mask.shape());
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::size_t xi = x.index();
  return x.tape()->Record(
      "apply_mask", std::move(out), {x},
      [xi, mask](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& dx = t.GradBuffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
      });
}

Var SliceColumns(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  RequireMatrix("slice_columns", xv);
  const std::size_t n = xv.cols();
  if (begin + count > n) {
    throw ContractError("slice_columns: [" + std::to_string(begin) + ", " +
                        std::to_string(begin + count) + ") exceeds " +
                        std::to_string(n) + " columns");
  }
  Tensor out({xv.rows(), count});
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    std::copy_n(xv.raw() + r * n + begin, count, out.raw() + r * count);
  }
  const std::size_t xi = x.index();
  return x.tape()->Record(
      "slice_columns", std::move(out), {x},
      [xi, n, begin, count](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& dx = t.GradBuffer(xi);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < count; ++c) {
            dx[r * n + begin + c] += g[r * count + c];
          }
        }
      });
}

Var ConcatColumns(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_columns: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    RequireMatrix("concat_columns", p.value());
    RequireSameTape(parts[0], p);
    if (p.value().rows() != rows) {
      ShapeMismatch("concat_columns", parts[0].shape(), p.shape());
    }
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  std::vector<std::size_t> indices;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.raw() + r * pv.cols(), pv.cols(), out.raw() + r * total + offset);
    }
    offset += pv.cols();
    indices.push_back(p.index());
  }
  return parts[0].tape()->Record(
      "concat_columns", std::move(out), parts,
      [indices = std::move(indices), widths = std::move(widths), total](
          Tape& t, const Tensor&, const Tensor& g) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < indices.size(); ++p) {
          if (t.RequiresGrad(indices[p])) {
            Tensor& dp = t.GradBuffer(indices[p]);
            for (std::size_t r = 0; r < g.rows(); ++r) {
              for (std::size_t c = 0; c < widths[p]; ++c) {
                dp[r * widths[p] + c] += g[r * total + offset + c];
              }
            }
          }
          offset += widths[p];
        }
      });
}

Var SelectRow(Var x, std::size_t row) {
  const Tensor& xv = x.value();
  RequireMatrix("select_row", xv);
  if (row >= xv.rows()) {
    throw ContractError("select_row: row " + std::to_string(row) +
                        " out of range for shape " + ShapeToString(xv.shape()));
  }
  const std::size_t n = xv.cols();
  Tensor out({1, n});
  std::copy_n(xv.raw() + row * n, n, out.raw());
  const std::size_t xi = x.index();
  return x.tape()->Record(
      "select_row", std::move(out), {x},
      [xi, row, n](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& dx = t.GradBuffer(xi);
        for (std::size_t c = 0; c < n; ++c) dx[row * n + c] += g[c];
      });
}

Var MeanRows(Var x) {
  const Tensor& xv = x.value();
  RequireMatrix("mean_rows", xv);
  const std::size_t m = xv.rows(), n = xv.cols();
  if (m == 0) throw ContractError("mean_rows: empty input");
  Tensor out({1, n});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[c] += xv[r * n + c];
  }
  for (std::size_t c = 0; c < n; ++c) out[c] /= static_cast<double>(m);
  const std::size_t xi = x.index();
  return x.tape()->Record(
      "mean_rows", std::move(out), {x},
      [xi, m, n](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& dx = t.GradBuffer(xi);
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += g[c] * inv;
        }
      });
}

Var Sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const std::size_t xi = x.index();
  return x.tape()->Record(
      "sum", Tensor::Scalar(total), {x},
      [xi](Tape& t, const Tensor&, const Tensor& g) {
        Tensor& dx = t.GradBuffer(xi);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0];
      });
}

Var Mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ContractError("mean: empty input");
  return Scale(Sum(x), 1.0 / static_cast<double>(n));
}

}  // namespace pdpa::ad
