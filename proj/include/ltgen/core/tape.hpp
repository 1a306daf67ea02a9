// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ltgen/core/matrix.hpp"

namespace ltgen {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape;

/// Adjoints produced by Tape::backward, indexed by node.
class Gradients {
 public:
  /// ∂output/∂node; a zero matrix of the node's shape when the node does not
  /// influence the output.
  const Matrix& operator[](Var v) const;
  Matrix take(Var v);

 private:
  friend class Tape;
  std::vector<Matrix> adjoints_;
};

/// Define-by-run reverse-mode recorder. Nodes are appended in evaluation
/// order, so inputs always precede consumers. One Tape serves one forward and
/// one backward pass and is not shared between threads.
class Tape {
 public:
  /// Differentiable input.
  Var leaf(Matrix value);
  /// Input that never receives a gradient.
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Hadamard product.
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  /// m (B×n) plus a broadcast row (1×n).
  Var add_row(Var m, Var row);
  Var matmul(Var a, Var b);
  Var relu(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  /// Row-wise log-softmax.
  Var log_softmax(Var a);
  /// Rows of `table` selected by `rows`; gradient scatters back.
  Var gather_rows(Var table, std::vector<std::size_t> rows);
  Var concat_cols(Var a, Var b);
  Var sum(Var a);
  Var mean(Var a);

  /// L2: mean over all entries of (pred - target)².
  Var mse(Var pred, Var target);
  /// L1: mean over all entries of |pred - target|.
  Var l1(Var pred, Var target);
  /// (1/B) Σ_b w_b · mean_p |pred_bp - target_bp|.
  Var weighted_l1(Var pred, Var target, std::vector<double> row_weights);
  /// Mean over rows of -log softmax(logits_b + offsets)[label_b]. `offsets`
  /// is empty (no adjustment) or one constant per column.
  Var softmax_cross_entropy(Var logits, std::vector<std::size_t> labels,
                            std::vector<double> offsets = {});

  /// Reverse accumulation from a 1×1 node. Throws ContractError otherwise.
  Gradients backward(Var output) const;

 private:
  enum class Op {
    kLeaf,
    kConstant,
    kAdd,
    kSub,
    kMul,
    kScale,
    kAddRow,
    kMatmul,
    kRelu,
    kTanh,
    kSigmoid,
    kLogSoftmax,
    kGatherRows,
    kConcatCols,
    kSum,
    kMean,
    kMse,
    kL1,
    kWeightedL1,
    kSoftmaxCrossEntropy,
  };

  struct Node {
    explicit Node(Op o, std::size_t first = 0, std::size_t second = 0) : op(o), a(first), b(second) {}

    Op op;
    std::size_t a;
    std::size_t b;
    Matrix value;
    bool needs_grad = false;
    double scalar = 0.0;
    std::vector<std::size_t> indices;
    std::vector<double> weights;
    Matrix cache;
  };

  Var push(Node node);
  bool needs(std::size_t id) const { return nodes_[id].needs_grad; }
  void check_var(Var v) const;

  std::vector<Node> nodes_;
};

/// Named trainable tensor.
struct Parameter {
  std::string name;
  Matrix value;
};

using ParameterSet = std::vector<Parameter>;

/// Records every parameter as a leaf, in order.
std::vector<Var> bind_parameters(Tape& tape, const ParameterSet& params);
/// Gradients for bound parameters, in the same order.
std::vector<Matrix> collect_gradients(Gradients& grads, std::span<const Var> vars);
std::size_t parameter_count(const ParameterSet& params);

}  // namespace ltgen
