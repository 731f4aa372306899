#include "specdet/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace specdet {

namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RMat>;
using MapM = Eigen::Map<RMat>;

MapC mat(const Tensor& t) {
  return MapC(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MapM mat(Tensor& t) {
  return MapM(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

std::vector<std::size_t> matrix_shape(std::size_t rows, std::size_t cols, bool keep_vector) {
  if (rows == 1 && keep_vector) return {cols};
  return {rows, cols};
}

bool wants_grad(const Var& v) { return v && v->requires_grad; }

Var make_node(const char* op, Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward_fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by operation '") + op + "'");
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  for (const Var& p : parents) node->requires_grad = node->requires_grad || wants_grad(p);
  node->parents = std::move(parents);
  if (node->requires_grad) node->backward_fn = std::move(backward_fn);
  return node;
}

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw ValidationError(std::string(op) + ": " + what);
}

// Elementwise unary op given value map and derivative-from-(x, y) map.
template <typename Fwd, typename Deriv>
Var elementwise(const char* op, const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out(a->value.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(a->value[i]);
  return make_node(op, std::move(out), {a}, [deriv](Node& self) {
    const Var& x = self.parents[0];
    if (!wants_grad(x)) return;
    Tensor& gx = x->grad_slot();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * deriv(x->value[i], self.value[i]);
    }
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor& Node::grad_slot() {
  if (grad.empty()) grad = Tensor::zeros_like(value);
  return grad;
}

Var variable(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->op = "variable";
  return node;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return node;
}

void backward(const Var& root) {
  if (!root) throw ValidationError("backward: null root");
  if (root->value.size() != 1) {
    throw ValidationError("backward: loss must be scalar, got shape " + root->value.shape_string());
  }
  if (!root->value.all_finite()) throw NumericError("backward: non-finite loss");

  // Iterative post-order DFS yields a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_slot()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
      if (!n->grad.all_finite()) {
        throw NumericError(std::string("non-finite gradient in backward of '") + n->op + "'");
      }
    }
  }
}

namespace ops {

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  require(X.cols() == W.cols(), "linear",
          "input width " + std::to_string(X.cols()) + " vs weight " + W.shape_string());
  if (b) require(b->value.size() == W.rows(), "linear", "bias length mismatch");
  Tensor out(matrix_shape(X.rows(), W.rows(), X.rank() <= 1));
  auto y = mat(out);
  y.noalias() = mat(X) * mat(W).transpose();
  if (b) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b->value.data(),
                                                              static_cast<Eigen::Index>(W.rows()));
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_node("linear", std::move(out), std::move(parents), [](Node& self) {
    const Var& xv = self.parents[0];
    const Var& wv = self.parents[1];
    auto g = mat(std::as_const(self.grad));
    if (wants_grad(xv)) mat(xv->grad_slot()).noalias() += g * mat(wv->value);
    if (wants_grad(wv)) mat(wv->grad_slot()).noalias() += g.transpose() * mat(xv->value);
    if (self.parents.size() > 2 && wants_grad(self.parents[2])) {
      Tensor& gb = self.parents[2]->grad_slot();
      Eigen::Map<Eigen::RowVectorXd>(gb.data(), static_cast<Eigen::Index>(gb.size())) +=
          g.colwise().sum();
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  require(A.cols() == B.rows(), "matmul", A.shape_string() + " x " + B.shape_string());
  Tensor out(matrix_shape(A.rows(), B.cols(), A.rank() <= 1));
  mat(out).noalias() = mat(A) * mat(B);
  return make_node("matmul", std::move(out), {a, b}, [](Node& self) {
    const Var& av = self.parents[0];
    const Var& bv = self.parents[1];
    auto g = mat(std::as_const(self.grad));
    if (wants_grad(av)) mat(av->grad_slot()).noalias() += g * mat(bv->value).transpose();
    if (wants_grad(bv)) mat(bv->grad_slot()).noalias() += mat(av->value).transpose() * g;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  require(A.cols() == B.cols(), "matmul_nt", A.shape_string() + " x " + B.shape_string() + "^T");
  Tensor out(matrix_shape(A.rows(), B.rows(), false));
  mat(out).noalias() = mat(A) * mat(B).transpose();
  return make_node("matmul_nt", std::move(out), {a, b}, [](Node& self) {
    const Var& av = self.parents[0];
    const Var& bv = self.parents[1];
    auto g = mat(std::as_const(self.grad));
    if (wants_grad(av)) mat(av->grad_slot()).noalias() += g * mat(bv->value);
    if (wants_grad(bv)) mat(bv->grad_slot()).noalias() += g.transpose() * mat(av->value);
  });
}

Var transpose(const Var& a) {
  const Tensor& A = a->value;
  Tensor out(std::vector<std::size_t>{A.cols(), A.rows()});
  mat(out) = mat(A).transpose();
  return make_node("transpose", std::move(out), {a}, [](Node& self) {
    const Var& av = self.parents[0];
    if (wants_grad(av)) mat(av->grad_slot()) += mat(std::as_const(self.grad)).transpose();
  });
}

Var add(const Var& a, const Var& b) {
  require(a->value.size() == b->value.size(), "add",
          a->value.shape_string() + " vs " + b->value.shape_string());
  Tensor out = a->value;
  out.accumulate(b->value);
  return make_node("add", std::move(out), {a, b}, [](Node& self) {
    for (const Var& p : self.parents) {
      if (wants_grad(p)) p->grad_slot().accumulate(self.grad);
    }
  });
}

Var add_row(const Var& a, const Var& r) {
  require(a->value.cols() == r->value.size(), "add_row", "row length mismatch");
  Tensor out = a->value;
  mat(out).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(
      r->value.data(), static_cast<Eigen::Index>(r->value.size()));
  return make_node("add_row", std::move(out), {a, r}, [](Node& self) {
    const Var& av = self.parents[0];
    const Var& rv = self.parents[1];
    if (wants_grad(av)) av->grad_slot().accumulate(self.grad);
    if (wants_grad(rv)) {
      Tensor& gr = rv->grad_slot();
      Eigen::Map<Eigen::RowVectorXd>(gr.data(), static_cast<Eigen::Index>(gr.size())) +=
          mat(std::as_const(self.grad)).colwise().sum();
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require(a->value.size() == b->value.size(), "sub",
          a->value.shape_string() + " vs " + b->value.shape_string());
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make_node("sub", std::move(out), {a, b}, [](Node& self) {
    if (wants_grad(self.parents[0])) self.parents[0]->grad_slot().accumulate(self.grad);
    if (wants_grad(self.parents[1])) {
      Tensor& g = self.parents[1]->grad_slot();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require(a->value.size() == b->value.size(), "mul",
          a->value.shape_string() + " vs " + b->value.shape_string());
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_node("mul", std::move(out), {a, b}, [](Node& self) {
    const Var& av = self.parents[0];
    const Var& bv = self.parents[1];
    if (wants_grad(av)) {
      Tensor& g = av->grad_slot();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv->value[i];
    }
    if (wants_grad(bv)) {
      Tensor& g = bv->grad_slot();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av->value[i];
    }
  });
}

Var mul_row(const Var& a, const Var& r) {
  const std::size_t rows = a->value.rows();
  const std::size_t cols = a->value.cols();
  require(cols == r->value.size(), "mul_row", "row length mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) *= r->value[j];
  return make_node("mul_row", std::move(out), {a, r}, [rows, cols](Node& self) {
    const Var& av = self.parents[0];
    const Var& rv = self.parents[1];
    if (wants_grad(av)) {
      Tensor& g = av->grad_slot();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) g.at(i, j) += self.grad.at(i, j) * rv->value[j];
    }
    if (wants_grad(rv)) {
      Tensor& g = rv->grad_slot();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) g[j] += self.grad.at(i, j) * av->value.at(i, j);
    }
  });
}

Var scale(const Var& a, double c) {
  return elementwise("scale", a, [c](double x) { return c * x; },
                     [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return elementwise("add_scalar", a, [c](double x) { return x + c; },
                     [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
  return elementwise("relu", a, [](double x) { return x > 0 ? x : 0.0; },
                     [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return elementwise("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1 - y); });
}

Var softplus(const Var& a) {
  return elementwise(
      "softplus", a,
      [](double x) { return x > 30 ? x : (x < -30 ? std::exp(x) : std::log1p(std::exp(x))); },
      [](double x, double) { return stable_sigmoid(x); });
}

Var exp(const Var& a) {
  return elementwise("exp", a, [](double x) { return std::exp(x); },
                     [](double, double y) { return y; });
}

Var log(const Var& a) {
  for (double v : a->value.values()) {
    if (!(v > 0)) throw NumericError("log of non-positive value");
  }
  return elementwise("log", a, [](double x) { return std::log(x); },
                     [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return elementwise("square", a, [](double x) { return x * x; },
                     [](double x, double) { return 2 * x; });
}

Var clamped_log(const Var& a, double lo, double hi) {
  return elementwise(
      "clamped_log", a, [lo, hi](double x) { return std::log(std::clamp(x, lo, hi)); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 / x : 0.0; });
}

Var softmax_rows(const Var& a) {
  const std::size_t rows = a->value.rows();
  const std::size_t cols = a->value.cols();
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = a->value.at(i, 0);
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, a->value.at(i, j));
    double z = 0;
    for (std::size_t j = 0; j < cols; ++j) z += (out.at(i, j) = std::exp(a->value.at(i, j) - mx));
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) /= z;
  }
  return make_node("softmax_rows", std::move(out), {a}, [rows, cols](Node& self) {
    const Var& av = self.parents[0];
    if (!wants_grad(av)) return;
    Tensor& g = av->grad_slot();
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0;
      for (std::size_t j = 0; j < cols; ++j) dot += self.grad.at(i, j) * self.value.at(i, j);
      for (std::size_t j = 0; j < cols; ++j)
        g.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  const std::size_t rows = a->value.rows();
  const std::size_t cols = a->value.cols();
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = a->value.at(i, 0);
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, a->value.at(i, j));
    double z = 0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(a->value.at(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = a->value.at(i, j) - lse;
  }
  return make_node("log_softmax_rows", std::move(out), {a}, [rows, cols](Node& self) {
    const Var& av = self.parents[0];
    if (!wants_grad(av)) return;
    Tensor& g = av->grad_slot();
    for (std::size_t i = 0; i < rows; ++i) {
      double gsum = 0;
      for (std::size_t j = 0; j < cols; ++j) gsum += self.grad.at(i, j);
      for (std::size_t j = 0; j < cols; ++j)
        g.at(i, j) += self.grad.at(i, j) - std::exp(self.value.at(i, j)) * gsum;
    }
  });
}

Var mean_rows(const Var& a) {
  const std::size_t rows = a->value.rows();
  const std::size_t cols = a->value.cols();
  Tensor out(std::vector<std::size_t>{cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j] += a->value.at(i, j);
  for (std::size_t j = 0; j < cols; ++j) out[j] /= static_cast<double>(rows);
  return make_node("mean_rows", std::move(out), {a}, [rows, cols](Node& self) {
    const Var& av = self.parents[0];
    if (!wants_grad(av)) return;
    Tensor& g = av->grad_slot();
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) g.at(i, j) += self.grad[j] * inv;
  });
}

Var sum(const Var& a) {
  double s = 0;
  for (double v : a->value.values()) s += v;
  return make_node("sum", Tensor::scalar(s), {a}, [](Node& self) {
    const Var& av = self.parents[0];
    if (!wants_grad(av)) return;
    Tensor& g = av->grad_slot();
    const double gs = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gs;
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a->value.size())); }

Var l2_normalize(const Var& a, double eps) {
  double sq = 0;
  for (double v : a->value.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  const bool clamped = norm < eps;
  const double denom = clamped ? eps : norm;
  Tensor out = a->value;
  for (double& v : out.storage()) v /= denom;
  return make_node("l2_normalize", std::move(out), {a}, [denom, clamped](Node& self) {
    const Var& av = self.parents[0];
    if (!wants_grad(av)) return;
    Tensor& g = av->grad_slot();
    // d(x/‖x‖) = (g − y·(yᵀg))/‖x‖
    double yg = 0;
    if (!clamped) {
      for (std::size_t i = 0; i < g.size(); ++i) yg += self.value[i] * self.grad[i];
    }
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (self.grad[i] - self.value[i] * yg) / denom;
  });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
  const std::size_t rows = a->value.rows();
  const std::size_t cols = a->value.cols();
  require(gain->value.size() == cols && bias->value.size() == cols, "layer_norm_rows",
          "gain/bias length mismatch");
  Tensor out(a->value.shape());
  auto xhat = std::make_shared<Tensor>(a->value.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double mu = 0;
    for (std::size_t j = 0; j < cols; ++j) mu += a->value.at(i, j);
    mu /= static_cast<double>(cols);
    double var = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = a->value.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < cols; ++j) {
      const double xh = (a->value.at(i, j) - mu) * is;
      xhat->at(i, j) = xh;
      out.at(i, j) = xh * gain->value[j] + bias->value[j];
    }
  }
  return make_node("layer_norm_rows", std::move(out), {a, gain, bias},
                   [rows, cols, xhat, inv_std](Node& self) {
                     const Var& av = self.parents[0];
                     const Var& gv = self.parents[1];
                     const Var& bv = self.parents[2];
                     const Tensor& g = self.grad;
                     if (wants_grad(gv)) {
                       Tensor& gg = gv->grad_slot();
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < cols; ++j) gg[j] += g.at(i, j) * xhat->at(i, j);
                     }
                     if (wants_grad(bv)) {
                       Tensor& gb = bv->grad_slot();
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < cols; ++j) gb[j] += g.at(i, j);
                     }
                     if (!wants_grad(av)) return;
                     Tensor& ga = av->grad_slot();
                     const double n = static_cast<double>(cols);
                     for (std::size_t i = 0; i < rows; ++i) {
                       double m1 = 0, m2 = 0;
                       for (std::size_t j = 0; j < cols; ++j) {
                         const double gx = g.at(i, j) * gv->value[j];
                         m1 += gx;
                         m2 += gx * xhat->at(i, j);
                       }
                       m1 /= n;
                       m2 /= n;
                       for (std::size_t j = 0; j < cols; ++j) {
                         const double gx = g.at(i, j) * gv->value[j];
                         ga.at(i, j) += (*inv_std)[i] * (gx - m1 - xhat->at(i, j) * m2);
                       }
                     }
                   });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const std::size_t rows = a->value.rows();
  const std::size_t cols = a->value.cols();
  require(begin < end && end <= cols, "slice_cols", "bad column range");
  const std::size_t w = end - begin;
  Tensor out(matrix_shape(rows, w, a->value.rank() <= 1));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = a->value.at(i, begin + j);
  return make_node("slice_cols", std::move(out), {a}, [rows, w, begin](Node& self) {
    const Var& av = self.parents[0];
    if (!wants_grad(av)) return;
    Tensor& g = av->grad_slot();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < w; ++j) g.at(i, begin + j) += self.grad.at(i, j);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const std::size_t rows = parts[0]->value.rows();
  std::size_t cols = 0;
  bool vec = true;
  for (const Var& p : parts) {
    require(p->value.rows() == rows, "concat_cols", "row count mismatch");
    cols += p->value.cols();
    vec = vec && p->value.rank() <= 1;
  }
  Tensor out(matrix_shape(rows, cols, vec));
  std::size_t off = 0;
  for (const Var& p : parts) {
    const std::size_t pc = p->value.cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pc; ++j) out.at(i, off + j) = p->value.at(i, j);
    off += pc;
  }
  return make_node("concat_cols", std::move(out), parts, [rows](Node& self) {
    std::size_t off = 0;
    for (const Var& p : self.parents) {
      const std::size_t pc = p->value.cols();
      if (wants_grad(p)) {
        Tensor& g = p->grad_slot();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < pc; ++j) g.at(i, j) += self.grad.at(i, off + j);
      }
      off += pc;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t cols = parts[0]->value.cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require(p->value.cols() == cols, "concat_rows", "column count mismatch");
    rows += p->value.rows();
  }
  Tensor out(std::vector<std::size_t>{rows, cols});
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p->value.storage().begin(), p->value.storage().end(), out.data() + off);
    off += p->value.size();
  }
  return make_node("concat_rows", std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (const Var& p : self.parents) {
      const std::size_t n = p->value.size();
      if (wants_grad(p)) {
        Tensor& g = p->grad_slot();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Var row(const Var& a, std::size_t r) {
  const std::size_t cols = a->value.cols();
  require(r < a->value.rows(), "row", "row index out of range");
  Tensor out(std::vector<std::size_t>{cols});
  std::copy_n(a->value.data() + r * cols, cols, out.data());
  return make_node("row", std::move(out), {a}, [r, cols](Node& self) {
    const Var& av = self.parents[0];
    if (!wants_grad(av)) return;
    Tensor& g = av->grad_slot();
    for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += self.grad[j];
  });
}

Var pick(const Var& a, std::size_t index) {
  require(index < a->value.size(), "pick", "index out of range");
  return make_node("pick", Tensor::scalar(a->value[index]), {a}, [index](Node& self) {
    const Var& av = self.parents[0];
    if (wants_grad(av)) av->grad_slot()[index] += self.grad[0];
  });
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
  Tensor out(std::move(shape), a->value.storage());
  return make_node("reshape", std::move(out), {a}, [](Node& self) {
    const Var& av = self.parents[0];
    if (!wants_grad(av)) return;
    Tensor& g = av->grad_slot();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace ops

}  // namespace specdet
