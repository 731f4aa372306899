#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "specdet/tensor.hpp"

namespace specdet {

struct Node;
using Var = std::shared_ptr<Node>;

/// One vertex of a reverse-mode computation graph.
///
/// Graphs are built per forward pass and are never shared between threads;
/// parameters enter a graph as leaves holding a copy of the stored value.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily during backward
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
  bool requires_grad = false;

  /// grad slot, zero-initialised on first use.
  Tensor& grad_slot();
};

/// Leaf that participates in differentiation.
Var variable(Tensor value);
/// Leaf that never receives a gradient.
Var constant(Tensor value);

/// Runs reverse accumulation from a scalar root. Rejects non-scalar roots.
void backward(const Var& root);

namespace ops {

// Shapes follow the Tensor matrix view: rank-1 values are 1×n rows.

/// X (n×in) · Wᵀ (in×out) + b, with W stored out×in.
Var linear(const Var& x, const Var& w, const Var& b = nullptr);
Var matmul(const Var& a, const Var& b);
/// a · bᵀ
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
/// Adds a 1×cols row to every row of a.
Var add_row(const Var& a, const Var& row);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// Multiplies every row of a by the 1×cols row.
Var mul_row(const Var& a, const Var& row);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
/// log(clamp(a, lo, hi)); gradient is zero where the clamp is active.
Var clamped_log(const Var& a, double lo, double hi);

Var softmax_rows(const Var& a);
/// Per-row log-softmax.
Var log_softmax_rows(const Var& a);
/// Mean over rows: (n×c) → (1×c).
Var mean_rows(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// a / max(‖a‖₂, eps) over all elements.
Var l2_normalize(const Var& a, double eps = 1e-12);
/// Per-row normalisation to zero mean / unit variance followed by gain and bias.
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);

Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var row(const Var& a, std::size_t r);
/// Element picked by flat index, as a scalar.
Var pick(const Var& a, std::size_t index);
/// Reinterprets the value with a new shape of equal element count.
Var reshape(const Var& a, std::vector<std::size_t> shape);

}  // namespace ops

}  // namespace specdet
