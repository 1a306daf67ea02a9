// SPDX-License-Identifier: Apache-2.0

#include "ltgen/core/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ltgen/core/error.hpp"

namespace ltgen {
namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": operand shapes differ (" + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

Matrix scalar(double v) { return Matrix(1, 1, v); }

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Row-wise softmax of (m + offsets).
Matrix softmax_rows(const Matrix& m, const std::vector<double>& offsets) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m.cols(); ++c) {
      top = std::max(top, m(r, c) + (offsets.empty() ? 0.0 : offsets[c]));
    }
    double z = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double e = std::exp(m(r, c) + (offsets.empty() ? 0.0 : offsets[c]) - top);
      out(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) /= z;
  }
  return out;
}

}  // namespace

const Matrix& Gradients::operator[](Var v) const {
  if (v.id >= adjoints_.size()) throw ContractError("gradient requested for unknown node");
  return adjoints_[v.id];
}

Matrix Gradients::take(Var v) {
  if (v.id >= adjoints_.size()) throw ContractError("gradient requested for unknown node");
  return std::move(adjoints_[v.id]);
}

void Tape::check_var(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Matrix value) {
  Node n{Op::kLeaf};
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n{Op::kConstant};
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_var(a);
  check_var(b);
  require_same(value(a), value(b), "add");
  Node n{Op::kAdd, a.id, b.id};
  n.value = value(a) + value(b);
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_var(a);
  check_var(b);
  Node n{Op::kSub, a.id, b.id};
  n.value = value(a) - value(b);
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_var(a);
  check_var(b);
  require_same(value(a), value(b), "mul");
  Node n{Op::kMul, a.id, b.id};
  n.value = value(a);
  const Matrix& rhs = value(b);
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= rhs[i];
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  check_var(a);
  Node n{Op::kScale, a.id};
  n.value = s * value(a);
  n.scalar = s;
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Var Tape::add_row(Var m, Var row) {
  check_var(m);
  check_var(row);
  const Matrix& mv = value(m);
  const Matrix& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != mv.cols()) throw ShapeError("add_row: row must be 1xcols");
  Node n{Op::kAddRow, m.id, row.id};
  n.value = mv;
  for (std::size_t r = 0; r < mv.rows(); ++r) {
    auto out = n.value.row(r);
    for (std::size_t c = 0; c < mv.cols(); ++c) out[c] += rv[c];
  }
  n.needs_grad = needs(m.id) || needs(row.id);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  check_var(a);
  check_var(b);
  Node n{Op::kMatmul, a.id, b.id};
  n.value = ltgen::matmul(value(a), value(b));
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  check_var(a);
  Node n{Op::kRelu, a.id};
  n.value = value(a);
  for (double& v : n.value.data()) v = v > 0.0 ? v : 0.0;
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  check_var(a);
  Node n{Op::kTanh, a.id};
  n.value = value(a);
  for (double& v : n.value.data()) v = std::tanh(v);
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  check_var(a);
  Node n{Op::kSigmoid, a.id};
  n.value = value(a);
  for (double& v : n.value.data()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Var Tape::log_softmax(Var a) {
  check_var(a);
  Node n{Op::kLogSoftmax, a.id};
  const Matrix& in = value(a);
  n.cache = softmax_rows(in, {});
  n.value = Matrix(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.size(); ++i) n.value[i] = std::log(n.cache[i]);
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Var Tape::gather_rows(Var table, std::vector<std::size_t> rows) {
  check_var(table);
  const Matrix& t = value(table);
  Node n{Op::kGatherRows, table.id};
  n.value = Matrix(rows.size(), t.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= t.rows()) throw ContractError("gather_rows: row index out of range");
    std::copy(t.row(rows[r]).begin(), t.row(rows[r]).end(), n.value.row(r).begin());
  }
  n.indices = std::move(rows);
  n.needs_grad = needs(table.id);
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  check_var(a);
  check_var(b);
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.rows() != bv.rows()) throw ShapeError("concat_cols: row counts differ");
  Node n{Op::kConcatCols, a.id, b.id};
  n.value = Matrix(av.rows(), av.cols() + bv.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto out = n.value.row(r);
    std::copy(av.row(r).begin(), av.row(r).end(), out.begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), out.begin() + static_cast<long>(av.cols()));
  }
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  check_var(a);
  Node n{Op::kSum, a.id};
  double s = 0.0;
  for (double v : value(a).data()) s += v;
  n.value = scalar(s);
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  check_var(a);
  if (value(a).empty()) throw ContractError("mean of empty matrix");
  Node n{Op::kMean, a.id};
  double s = 0.0;
  for (double v : value(a).data()) s += v;
  n.value = scalar(s / static_cast<double>(value(a).size()));
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Var Tape::mse(Var pred, Var target) {
  check_var(pred);
  check_var(target);
  require_same(value(pred), value(target), "mse");
  if (value(pred).empty()) throw ContractError("mse of empty matrix");
  Node n{Op::kMse, pred.id, target.id};
  n.cache = value(pred) - value(target);
  double s = 0.0;
  for (double d : n.cache.data()) s += d * d;
  n.value = scalar(s / static_cast<double>(n.cache.size()));
  n.needs_grad = needs(pred.id) || needs(target.id);
  return push(std::move(n));
}

Var Tape::l1(Var pred, Var target) {
  check_var(pred);
  check_var(target);
  require_same(value(pred), value(target), "l1");
  if (value(pred).empty()) throw ContractError("l1 of empty matrix");
  Node n{Op::kL1, pred.id, target.id};
  n.cache = value(pred) - value(target);
  double s = 0.0;
  for (double d : n.cache.data()) s += std::abs(d);
  n.value = scalar(s / static_cast<double>(n.cache.size()));
  n.needs_grad = needs(pred.id) || needs(target.id);
  return push(std::move(n));
}

Var Tape::weighted_l1(Var pred, Var target, std::vector<double> row_weights) {
  check_var(pred);
  check_var(target);
  require_same(value(pred), value(target), "weighted_l1");
  const Matrix& p = value(pred);
  if (row_weights.size() != p.rows()) throw ShapeError("weighted_l1: one weight per row required");
  if (p.empty()) throw ContractError("weighted_l1 of empty matrix");
  Node n{Op::kWeightedL1, pred.id, target.id};
  n.cache = p - value(target);
  double total = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double d : n.cache.row(r)) s += std::abs(d);
    total += row_weights[r] * s / static_cast<double>(p.cols());
  }
  n.value = scalar(total / static_cast<double>(p.rows()));
  n.weights = std::move(row_weights);
  n.needs_grad = needs(pred.id) || needs(target.id);
  return push(std::move(n));
}

Var Tape::softmax_cross_entropy(Var logits, std::vector<std::size_t> labels,
                                std::vector<double> offsets) {
  check_var(logits);
  const Matrix& z = value(logits);
  if (labels.size() != z.rows()) throw ShapeError("softmax_cross_entropy: one label per row");
  if (z.rows() == 0) throw ContractError("softmax_cross_entropy on empty batch");
  if (!offsets.empty() && offsets.size() != z.cols()) {
    throw ShapeError("softmax_cross_entropy: one offset per class");
  }
  Node n{Op::kSoftmaxCrossEntropy, logits.id};
  n.cache = softmax_rows(z, offsets);
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (labels[r] >= z.cols()) throw ContractError("softmax_cross_entropy: label out of range");
    // log-sum-exp recomputed from the shifted logits for accuracy.
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < z.cols(); ++c) {
      top = std::max(top, z(r, c) + (offsets.empty() ? 0.0 : offsets[c]));
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) {
      acc += std::exp(z(r, c) + (offsets.empty() ? 0.0 : offsets[c]) - top);
    }
    const double picked = z(r, labels[r]) + (offsets.empty() ? 0.0 : offsets[labels[r]]);
    total += top + std::log(acc) - picked;
  }
  n.value = scalar(total / static_cast<double>(z.rows()));
  n.indices = std::move(labels);
  n.weights = std::move(offsets);
  n.needs_grad = needs(logits.id);
  return push(std::move(n));
}

Gradients Tape::backward(Var output) const {
  check_var(output);
  if (value(output).rows() != 1 || value(output).cols() != 1) {
    throw ContractError("backward requires a scalar (1x1) output node");
  }
  Gradients result;
  auto& adj = result.adjoints_;
  adj.resize(nodes_.size());
  auto accumulate = [&](std::size_t id) -> Matrix& {
    if (adj[id].empty() && !nodes_[id].value.empty()) {
      adj[id] = Matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
    }
    return adj[id];
  };
  adj[output.id] = Matrix(1, 1, 1.0);

  for (std::size_t id = output.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || adj[id].empty()) continue;
    const Matrix& g = adj[id];
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kAdd:
        if (needs(n.a)) accumulate(n.a) += g;
        if (needs(n.b)) accumulate(n.b) += g;
        break;
      case Op::kSub:
        if (needs(n.a)) accumulate(n.a) += g;
        if (needs(n.b)) {
          Matrix& gb = accumulate(n.b);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
        break;
      case Op::kMul: {
        const Matrix& av = nodes_[n.a].value;
        const Matrix& bv = nodes_[n.b].value;
        if (needs(n.a)) {
          Matrix& ga = accumulate(n.a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (needs(n.b)) {
          Matrix& gb = accumulate(n.b);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
        break;
      }
      case Op::kScale: {
        Matrix& ga = accumulate(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
        break;
      }
      case Op::kAddRow:
        if (needs(n.a)) accumulate(n.a) += g;
        if (needs(n.b)) {
          Matrix& gb = accumulate(n.b);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
        }
        break;
      case Op::kMatmul:
        if (needs(n.a)) accumulate(n.a) += matmul_nt(g, nodes_[n.b].value);
        if (needs(n.b)) accumulate(n.b) += matmul_tn(nodes_[n.a].value, g);
        break;
      case Op::kRelu: {
        const Matrix& in = nodes_[n.a].value;
        Matrix& ga = accumulate(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += in[i] > 0.0 ? g[i] : 0.0;
        break;
      }
      case Op::kTanh: {
        Matrix& ga = accumulate(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case Op::kSigmoid: {
        Matrix& ga = accumulate(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
        break;
      }
      case Op::kLogSoftmax: {
        Matrix& ga = accumulate(n.a);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          double total = 0.0;
          for (double v : g.row(r)) total += v;
          for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) - n.cache(r, c) * total;
        }
        break;
      }
      case Op::kGatherRows: {
        Matrix& ga = accumulate(n.a);
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          auto dst = ga.row(n.indices[r]);
          auto src = g.row(r);
          for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
        }
        break;
      }
      case Op::kConcatCols: {
        const std::size_t split = nodes_[n.a].value.cols();
        if (needs(n.a)) {
          Matrix& ga = accumulate(n.a);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < split; ++c) ga(r, c) += g(r, c);
        }
        if (needs(n.b)) {
          Matrix& gb = accumulate(n.b);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = split; c < g.cols(); ++c) gb(r, c - split) += g(r, c);
        }
        break;
      }
      case Op::kSum: {
        Matrix& ga = accumulate(n.a);
        for (double& v : ga.data()) v += g[0];
        break;
      }
      case Op::kMean: {
        Matrix& ga = accumulate(n.a);
        const double s = g[0] / static_cast<double>(ga.size());
        for (double& v : ga.data()) v += s;
        break;
      }
      case Op::kMse: {
        const double s = 2.0 * g[0] / static_cast<double>(n.cache.size());
        if (needs(n.a)) {
          Matrix& ga = accumulate(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * n.cache[i];
        }
        if (needs(n.b)) {
          Matrix& gb = accumulate(n.b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= s * n.cache[i];
        }
        break;
      }
      case Op::kL1: {
        const double s = g[0] / static_cast<double>(n.cache.size());
        if (needs(n.a)) {
          Matrix& ga = accumulate(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * sign(n.cache[i]);
        }
        if (needs(n.b)) {
          Matrix& gb = accumulate(n.b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= s * sign(n.cache[i]);
        }
        break;
      }
      case Op::kWeightedL1: {
        const double base =
            g[0] / static_cast<double>(n.cache.rows() * n.cache.cols());
        for (std::size_t side = 0; side < 2; ++side) {
          const std::size_t target = side == 0 ? n.a : n.b;
          if (!needs(target)) continue;
          const double dir = side == 0 ? 1.0 : -1.0;
          Matrix& gt = accumulate(target);
          for (std::size_t r = 0; r < n.cache.rows(); ++r) {
            const double s = dir * base * n.weights[r];
            for (std::size_t c = 0; c < n.cache.cols(); ++c) gt(r, c) += s * sign(n.cache(r, c));
          }
        }
        break;
      }
      case Op::kSoftmaxCrossEntropy: {
        Matrix& ga = accumulate(n.a);
        const double s = g[0] / static_cast<double>(n.cache.rows());
        for (std::size_t r = 0; r < n.cache.rows(); ++r) {
          for (std::size_t c = 0; c < n.cache.cols(); ++c) {
            ga(r, c) += s * (n.cache(r, c) - (c == n.indices[r] ? 1.0 : 0.0));
          }
        }
        break;
      }
    }
  }

  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (adj[id].empty()) adj[id] = Matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
  }
  return result;
}

std::vector<Var> bind_parameters(Tape& tape, const ParameterSet& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p.value));
  return vars;
}

std::vector<Matrix> collect_gradients(Gradients& grads, std::span<const Var> vars) {
  std::vector<Matrix> out;
  out.reserve(vars.size());
  for (Var v : vars) out.push_back(grads.take(v));
  return out;
}

std::size_t parameter_count(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

}  // namespace ltgen
