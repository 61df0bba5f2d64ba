#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/parameters.hpp"
#include "netable/core/tensor.hpp"

namespace netable::ad {

// Handle to a node of a Graph. Only meaningful for the graph that created it.
struct Var {
  static constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = npos;
  bool valid() const noexcept { return id != npos; }
  friend bool operator==(Var, Var) = default;
};

enum class OpKind : std::uint8_t {
  constant,
  parameter,
  matvec,
  affine,
  add,
  sub,
  mul,
  scale,
  sigmoid,
  tanh,
  softmax,
  dot,
  concat,
  slice,
  sum,
  weighted_sum,
  gather,
  stack,
  weighted_rows,
  softmax_xent,
  softmax_xent_mask,
  sigmoid_xent,
};

inline std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matvec: return "matvec";
    case OpKind::affine: return "affine";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::softmax: return "softmax";
    case OpKind::dot: return "dot";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::sum: return "sum";
    case OpKind::weighted_sum: return "weighted_sum";
    case OpKind::gather: return "gather";
    case OpKind::stack: return "stack";
    case OpKind::weighted_rows: return "weighted_rows";
    case OpKind::softmax_xent: return "softmax_cross_entropy";
    case OpKind::softmax_xent_mask: return "softmax_cross_entropy_mask";
    case OpKind::sigmoid_xent: return "sigmoid_cross_entropy";
  }
  return "unknown";
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

inline ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.raw(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MatMap as_matrix(Tensor& t) {
  return MatMap(t.raw(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline ConstVecMap as_vector(const Tensor& t) {
  return ConstVecMap(t.raw(), static_cast<Eigen::Index>(t.size()));
}
inline VecMap as_vector(Tensor& t) { return VecMap(t.raw(), static_cast<Eigen::Index>(t.size())); }

inline double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

inline double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

inline double sigmoid(double z) { return detail::stable_sigmoid(z); }

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
// every input id is smaller than the id of the node consuming it.
class Graph {
 public:
  Graph() { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(Var v) const { return node(v).op; }
  std::span<const std::uint32_t> inputs(Var v) const { return node(v).inputs; }

  const Tensor& value(Var v) const {
    const Node& n = node(v);
    return n.param ? n.param->value : n.value;
  }

  // Gradient of the last backward() at this node; zero if the node was not reached.
  Tensor grad(Var v) const {
    const Node& n = node(v);
    if (n.param) return n.param->grad ? *n.param->grad : Tensor(n.param->value.shape());
    return n.grad ? *n.grad : Tensor(n.value.shape());
  }

  // ---- leaves -------------------------------------------------------------

  Var constant(Tensor t) { return push(OpKind::constant, {}, std::move(t), false); }
  Var constant_vector(std::vector<double> v) { return constant(Tensor::vector(std::move(v))); }
  Var zeros(std::size_t n) { return constant(Tensor::zeros(n)); }

  Var parameter(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    Node n;
    n.op = OpKind::parameter;
    n.param = &p;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
    param_nodes_.emplace(&p, v);
    return v;
  }

  // ---- linear algebra -----------------------------------------------------

  Var matvec(Var m, Var x) {
    const Tensor& M = value(m);
    const Tensor& X = value(x);
    if (!M.is_matrix() || !X.is_vector() || M.cols() != X.size()) shape_fail(OpKind::matvec, {m, x});
    Tensor out(Shape{M.rows()});
    detail::as_vector(out).noalias() = detail::as_matrix(M) * detail::as_vector(X);
    return push(OpKind::matvec, {m, x}, std::move(out));
  }

  Var affine(Var w, Var x, Var b) {
    const Tensor& W = value(w);
    const Tensor& X = value(x);
    const Tensor& B = value(b);
    if (!W.is_matrix() || !X.is_vector() || !B.is_vector() || W.cols() != X.size() || W.rows() != B.size()) {
      shape_fail(OpKind::affine, {w, x, b});
    }
    Tensor out = B;
    detail::as_vector(out).noalias() += detail::as_matrix(W) * detail::as_vector(X);
    return push(OpKind::affine, {w, x, b}, std::move(out));
  }

  // ---- elementwise --------------------------------------------------------

  Var add(Var a, Var b) { return binary(OpKind::add, a, b, [](double x, double y) { return x + y; }); }
  Var sub(Var a, Var b) { return binary(OpKind::sub, a, b, [](double x, double y) { return x - y; }); }
  Var mul(Var a, Var b) { return binary(OpKind::mul, a, b, [](double x, double y) { return x * y; }); }

  Var scale(Var a, double s) {
    Tensor out = value(a);
    for (double& v : out.data()) v *= s;
    Var r = push(OpKind::scale, {a}, std::move(out));
    nodes_[r.id].aux = {s};
    return r;
  }

  Var sigmoid(Var a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = detail::stable_sigmoid(v);
    return push(OpKind::sigmoid, {a}, std::move(out));
  }

  Var tanh(Var a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = std::tanh(v);
    return push(OpKind::tanh, {a}, std::move(out));
  }

  Var softmax(Var a) {
    const Tensor& in = value(a);
    if (!in.is_vector()) shape_fail(OpKind::softmax, {a});
    Tensor out = in;
    const double lse = detail::log_sum_exp(in.data());
    for (double& v : out.data()) v = std::exp(v - lse);
    return push(OpKind::softmax, {a}, std::move(out));
  }

  // ---- reductions and structure -------------------------------------------

  Var dot(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.is_vector() || !A.same_shape(B)) shape_fail(OpKind::dot, {a, b});
    const double d = detail::as_vector(A).dot(detail::as_vector(B));
    return push(OpKind::dot, {a, b}, Tensor::scalar(d));
  }

  // Joins vectors and scalars into one vector.
  Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("op 'concat': no inputs");
    std::size_t n = 0;
    for (Var p : parts) {
      if (value(p).rank() > 1) shape_fail(OpKind::concat, parts);
      n += value(p).size();
    }
    Tensor out(Shape{n});
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& t = value(p);
      std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
      off += t.size();
    }
    return push(OpKind::concat, std::vector<std::uint32_t>(ids(parts)), std::move(out));
  }
  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

  Var slice(Var a, std::size_t offset, std::size_t length) {
    const Tensor& in = value(a);
    if (!in.is_vector() || length == 0 || offset + length > in.size()) shape_fail(OpKind::slice, {a});
    Tensor out(Shape{length});
    std::copy_n(in.data().begin() + static_cast<std::ptrdiff_t>(offset), length, out.data().begin());
    Var r = push(OpKind::slice, {a}, std::move(out));
    nodes_[r.id].index = {offset};
    return r;
  }

  Var sum(std::span<const Var> items) {
    if (items.empty()) throw ShapeError("op 'sum': no inputs");
    Tensor out = value(items[0]);
    for (std::size_t i = 1; i < items.size(); ++i) {
      const Tensor& t = value(items[i]);
      if (!t.same_shape(out)) shape_fail(OpKind::sum, items);
      for (std::size_t k = 0; k < t.size(); ++k) out[k] += t[k];
    }
    return push(OpKind::sum, ids(items), std::move(out));
  }
  Var sum(std::initializer_list<Var> items) { return sum(std::span<const Var>(items.begin(), items.size())); }

  // Σ_i weights[i] · items[i]
  Var weighted_sum(Var weights, std::span<const Var> items) {
    const Tensor& w = value(weights);
    if (!w.is_vector() || w.size() != items.size() || items.empty()) {
      std::vector<Var> all{weights};
      all.insert(all.end(), items.begin(), items.end());
      shape_fail(OpKind::weighted_sum, all);
    }
    Tensor out(value(items[0]).shape());
    for (std::size_t i = 0; i < items.size(); ++i) {
      const Tensor& t = value(items[i]);
      if (!t.same_shape(out)) shape_fail(OpKind::weighted_sum, items);
      const double wi = w[i];
      for (std::size_t k = 0; k < t.size(); ++k) out[k] += wi * t[k];
    }
    std::vector<std::uint32_t> in{weights.id};
    for (Var v : items) in.push_back(v.id);
    return push(OpKind::weighted_sum, std::move(in), std::move(out));
  }

  // Row `row` of a matrix node (embedding lookup).
  Var gather(Var table, std::size_t row) {
    const Tensor& T = value(table);
    if (!T.is_matrix() || row >= T.rows()) {
      throw ShapeError("op 'gather': row " + std::to_string(row) + " out of range for " +
                       ad::to_string(T.shape()));
    }
    auto src = T.row(row);
    Tensor out(Shape{T.cols()}, std::vector<double>(src.begin(), src.end()));
    Var r = push(OpKind::gather, {table}, std::move(out));
    nodes_[r.id].index = {row};
    return r;
  }

  // n vectors of length d -> (n, d) matrix.
  Var stack(std::span<const Var> rows) {
    if (rows.empty()) throw ShapeError("op 'stack': no inputs");
    const std::size_t d = value(rows[0]).size();
    Tensor out(Shape{rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Tensor& t = value(rows[i]);
      if (!t.is_vector() || t.size() != d) shape_fail(OpKind::stack, rows);
      std::copy(t.data().begin(), t.data().end(), out.row(i).begin());
    }
    return push(OpKind::stack, ids(rows), std::move(out));
  }

  // out[r] = Σ_c weights[c] · table[cell_ids[r*cols + c]]  for an embedding table node.
  Var weighted_rows(Var table, std::span<const std::size_t> cell_ids, std::size_t cols, Var weights) {
    const Tensor& T = value(table);
    const Tensor& w = value(weights);
    if (!T.is_matrix() || !w.is_vector() || w.size() != cols || cols == 0 || cell_ids.empty() ||
        cell_ids.size() % cols != 0) {
      shape_fail(OpKind::weighted_rows, {table, weights});
    }
    const std::size_t rows = cell_ids.size() / cols;
    const std::size_t e = T.cols();
    Tensor out(Shape{rows, e});
    for (std::size_t r = 0; r < rows; ++r) {
      double* dst = out.raw() + r * e;
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t id = cell_ids[r * cols + c];
        if (id >= T.rows()) throw ShapeError("op 'weighted_rows': cell id out of range");
        const double wc = w[c];
        const double* src = T.raw() + id * e;
        for (std::size_t k = 0; k < e; ++k) dst[k] += wc * src[k];
      }
    }
    Var r = push(OpKind::weighted_rows, {table, weights}, std::move(out));
    nodes_[r.id].index.assign(cell_ids.begin(), cell_ids.end());
    nodes_[r.id].index.push_back(cols);
    return r;
  }

  // ---- losses (all return scalars) ----------------------------------------

  // -log softmax(logits)[target]
  Var softmax_cross_entropy(Var logits, std::size_t target) {
    const Tensor& z = value(logits);
    if (!z.is_vector()) shape_fail(OpKind::softmax_xent, {logits});
    if (target >= z.size()) {
      throw ContractError("softmax_cross_entropy: target " + std::to_string(target) + " out of range " +
                          std::to_string(z.size()));
    }
    const double loss = detail::log_sum_exp(z.data()) - z[target];
    Var r = push(OpKind::softmax_xent, {logits}, Tensor::scalar(loss));
    nodes_[r.id].index = {target};
    return r;
  }

  // -log Σ_{i: mask_i = 1} softmax(logits)_i  (probability mass on any gold unit)
  Var softmax_cross_entropy(Var logits, std::span<const double> mask) {
    const Tensor& z = value(logits);
    if (!z.is_vector()) shape_fail(OpKind::softmax_xent_mask, {logits});
    check_mask("softmax_cross_entropy", z, mask);
    std::vector<double> gold;
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (mask[i] > 0.5) gold.push_back(z[i]);
    }
    if (gold.empty()) throw ContractError("softmax_cross_entropy: mask selects no unit");
    const double loss = detail::log_sum_exp(z.data()) - detail::log_sum_exp(gold);
    Var r = push(OpKind::softmax_xent_mask, {logits}, Tensor::scalar(loss));
    nodes_[r.id].aux.assign(mask.begin(), mask.end());
    return r;
  }

  // Σ_i BCE(sigmoid(logits_i), mask_i), computed from logits.
  Var sigmoid_cross_entropy(Var logits, std::span<const double> mask) {
    const Tensor& z = value(logits);
    if (!z.is_vector()) shape_fail(OpKind::sigmoid_xent, {logits});
    check_mask("sigmoid_cross_entropy", z, mask);
    double loss = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double x = z[i];
      loss += std::max(x, 0.0) - x * mask[i] + std::log1p(std::exp(-std::abs(x)));
    }
    Var r = push(OpKind::sigmoid_xent, {logits}, Tensor::scalar(loss));
    nodes_[r.id].aux.assign(mask.begin(), mask.end());
    return r;
  }

  // Generic entry point for the ops whose behaviour is fully determined by their inputs.
  Var apply(OpKind op, std::span<const Var> in) {
    auto need = [&](std::size_t n) {
      if (in.size() != n) {
        throw ShapeError("op '" + std::string(op_name(op)) + "': expected " + std::to_string(n) + " inputs, got " +
                         std::to_string(in.size()));
      }
    };
    switch (op) {
      case OpKind::matvec: need(2); return matvec(in[0], in[1]);
      case OpKind::affine: need(3); return affine(in[0], in[1], in[2]);
      case OpKind::add: need(2); return add(in[0], in[1]);
      case OpKind::sub: need(2); return sub(in[0], in[1]);
      case OpKind::mul: need(2); return mul(in[0], in[1]);
      case OpKind::sigmoid: need(1); return sigmoid(in[0]);
      case OpKind::tanh: need(1); return tanh(in[0]);
      case OpKind::softmax: need(1); return softmax(in[0]);
      case OpKind::dot: need(2); return dot(in[0], in[1]);
      case OpKind::concat: return concat(in);
      case OpKind::sum: return sum(in);
      case OpKind::stack: return stack(in);
      case OpKind::weighted_sum:
        if (in.empty()) throw ShapeError("op 'weighted_sum': no inputs");
        return weighted_sum(in[0], in.subspan(1));
      default:
        throw ContractError("apply: op '" + std::string(op_name(op)) + "' needs extra arguments");
    }
  }
  Var apply(OpKind op, std::initializer_list<Var> in) {
    return apply(op, std::span<const Var>(in.begin(), in.size()));
  }

  // ---- backward -----------------------------------------------------------

  // Populates d loss / d node for every node reachable from `loss`, accumulating
  // into Parameter::grad for parameter leaves.
  void backward(Var loss) {
    const Node& ln = node(loss);
    if (!value(loss).is_scalar()) {
      throw ContractError("backward: loss must be a scalar, got shape " + ad::to_string(value(loss).shape()));
    }
    for (Node& n : nodes_) n.grad.reset();
    for (auto& [p, v] : param_nodes_) p->ensure_grad();
    if (!ln.needs_grad) return;
    grad_ref(loss.id)[0] += 1.0;
    for (std::uint32_t k = loss.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.needs_grad || n.op == OpKind::parameter || n.op == OpKind::constant || !n.grad) continue;
      propagate(k);
    }
  }

 private:
  struct Node {
    OpKind op = OpKind::constant;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    std::optional<Tensor> grad;
    Parameter* param = nullptr;
    bool needs_grad = false;
    std::vector<std::size_t> index;
    std::vector<double> aux;
  };

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("graph: invalid node id");
    return nodes_[v.id];
  }

  static std::vector<std::uint32_t> ids(std::span<const Var> vs) {
    std::vector<std::uint32_t> out;
    out.reserve(vs.size());
    for (Var v : vs) out.push_back(v.id);
    return out;
  }

  Var push(OpKind op, std::initializer_list<Var> in, Tensor value) {
    std::vector<std::uint32_t> v;
    v.reserve(in.size());
    for (Var x : in) v.push_back(x.id);
    return push(op, std::move(v), std::move(value));
  }

  Var push(OpKind op, std::vector<std::uint32_t> in, Tensor value, std::optional<bool> needs = std::nullopt) {
    Node n;
    n.op = op;
    bool ng = false;
    for (auto id : in) {
      if (id >= nodes_.size()) throw ContractError("graph: input id not in graph");
      ng = ng || nodes_[id].needs_grad;
    }
    n.needs_grad = needs.value_or(ng);
    n.inputs = std::move(in);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <class F>
  Var binary(OpKind op, Var a, Var b, F f) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) shape_fail(op, {a, b});
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(A[i], B[i]);
    return push(op, {a, b}, std::move(out));
  }

  [[noreturn]] void shape_fail(OpKind op, std::span<const Var> in) const {
    std::string msg = "op '" + std::string(op_name(op)) + "': incompatible shapes";
    for (Var v : in) msg += " " + ad::to_string(value(v).shape());
    throw ShapeError(msg);
  }
  [[noreturn]] void shape_fail(OpKind op, std::initializer_list<Var> in) const {
    shape_fail(op, std::span<const Var>(in.begin(), in.size()));
  }

  static void check_mask(const char* who, const Tensor& z, std::span<const double> mask) {
    if (mask.size() != z.size()) {
      throw ContractError(std::string(who) + ": mask length " + std::to_string(mask.size()) +
                          " does not match " + std::to_string(z.size()) + " scores");
    }
  }

  Tensor& grad_ref(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.param) return n.param->ensure_grad();
    if (!n.grad) n.grad.emplace(n.value.shape());
    return *n.grad;
  }

  bool wants(std::uint32_t id) const { return nodes_[id].needs_grad; }

  void propagate(std::uint32_t k) {
    using namespace detail;
    // Copy what we need: grad_ref() may not reallocate nodes_, but keep access explicit.
    const OpKind op = nodes_[k].op;
    const std::vector<std::uint32_t>& in = nodes_[k].inputs;
    const Tensor& g = *nodes_[k].grad;
    const Tensor& y = nodes_[k].value;

    switch (op) {
      case OpKind::matvec:
      case OpKind::affine: {
        const Tensor& M = value(Var{in[0]});
        const Tensor& X = value(Var{in[1]});
        if (wants(in[0])) as_matrix(grad_ref(in[0])).noalias() += as_vector(g) * as_vector(X).transpose();
        if (wants(in[1])) as_vector(grad_ref(in[1])).noalias() += as_matrix(M).transpose() * as_vector(g);
        if (op == OpKind::affine && wants(in[2])) as_vector(grad_ref(in[2])) += as_vector(g);
        break;
      }
      case OpKind::add:
        if (wants(in[0])) accumulate(grad_ref(in[0]), g, 1.0);
        if (wants(in[1])) accumulate(grad_ref(in[1]), g, 1.0);
        break;
      case OpKind::sub:
        if (wants(in[0])) accumulate(grad_ref(in[0]), g, 1.0);
        if (wants(in[1])) accumulate(grad_ref(in[1]), g, -1.0);
        break;
      case OpKind::mul: {
        const Tensor& A = value(Var{in[0]});
        const Tensor& B = value(Var{in[1]});
        if (wants(in[0])) {
          Tensor& ga = grad_ref(in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
        }
        if (wants(in[1])) {
          Tensor& gb = grad_ref(in[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
        }
        break;
      }
      case OpKind::scale:
        if (wants(in[0])) accumulate(grad_ref(in[0]), g, nodes_[k].aux[0]);
        break;
      case OpKind::sigmoid:
        if (wants(in[0])) {
          Tensor& ga = grad_ref(in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        }
        break;
      case OpKind::tanh:
        if (wants(in[0])) {
          Tensor& ga = grad_ref(in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        }
        break;
      case OpKind::softmax:
        if (wants(in[0])) {
          double gy = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
          Tensor& ga = grad_ref(in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - gy);
        }
        break;
      case OpKind::dot: {
        const double s = g[0];
        const Tensor& A = value(Var{in[0]});
        const Tensor& B = value(Var{in[1]});
        if (wants(in[0])) accumulate(grad_ref(in[0]), B, s);
        if (wants(in[1])) accumulate(grad_ref(in[1]), A, s);
        break;
      }
      case OpKind::concat: {
        std::size_t off = 0;
        for (auto id : in) {
          const std::size_t n = nodes_[id].param ? nodes_[id].param->value.size() : nodes_[id].value.size();
          if (wants(id)) {
            Tensor& gi = grad_ref(id);
            for (std::size_t i = 0; i < n; ++i) gi[i] += g[off + i];
          }
          off += n;
        }
        break;
      }
      case OpKind::slice:
        if (wants(in[0])) {
          Tensor& ga = grad_ref(in[0]);
          const std::size_t off = nodes_[k].index[0];
          for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
        }
        break;
      case OpKind::sum:
        for (auto id : in) {
          if (wants(id)) accumulate(grad_ref(id), g, 1.0);
        }
        break;
      case OpKind::weighted_sum: {
        const Tensor& w = value(Var{in[0]});
        for (std::size_t i = 1; i < in.size(); ++i) {
          const Tensor& v = value(Var{in[i]});
          if (wants(in[0])) {
            double s = 0.0;
            for (std::size_t j = 0; j < g.size(); ++j) s += g[j] * v[j];
            grad_ref(in[0])[i - 1] += s;
          }
          if (wants(in[i])) accumulate(grad_ref(in[i]), g, w[i - 1]);
        }
        break;
      }
      case OpKind::gather:
        if (wants(in[0])) {
          Tensor& gt = grad_ref(in[0]);
          auto dst = gt.row(nodes_[k].index[0]);
          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        }
        break;
      case OpKind::stack:
        for (std::size_t r = 0; r < in.size(); ++r) {
          if (!wants(in[r])) continue;
          Tensor& gr = grad_ref(in[r]);
          auto src = g.row(r);
          for (std::size_t i = 0; i < src.size(); ++i) gr[i] += src[i];
        }
        break;
      case OpKind::weighted_rows: {
        const Tensor& T = value(Var{in[0]});
        const Tensor& w = value(Var{in[1]});
        const auto& idx = nodes_[k].index;
        const std::size_t cols = idx.back();
        const std::size_t rows = (idx.size() - 1) / cols;
        const std::size_t e = T.cols();
        Tensor* gt = wants(in[0]) ? &grad_ref(in[0]) : nullptr;
        Tensor* gw = wants(in[1]) ? &grad_ref(in[1]) : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.raw() + r * e;
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t id = idx[r * cols + c];
            if (gt) {
              double* dst = gt->raw() + id * e;
              const double wc = w[c];
              for (std::size_t i = 0; i < e; ++i) dst[i] += wc * gr[i];
            }
            if (gw) {
              const double* src = T.raw() + id * e;
              double s = 0.0;
              for (std::size_t i = 0; i < e; ++i) s += gr[i] * src[i];
              (*gw)[c] += s;
            }
          }
        }
        break;
      }
      case OpKind::softmax_xent:
        if (wants(in[0])) {
          const Tensor& z = value(Var{in[0]});
          const double lse = log_sum_exp(z.data());
          Tensor& gz = grad_ref(in[0]);
          for (std::size_t i = 0; i < z.size(); ++i) gz[i] += g[0] * std::exp(z[i] - lse);
          gz[nodes_[k].index[0]] -= g[0];
        }
        break;
      case OpKind::softmax_xent_mask:
        if (wants(in[0])) {
          const Tensor& z = value(Var{in[0]});
          const auto& mask = nodes_[k].aux;
          const double lse = log_sum_exp(z.data());
          std::vector<double> gold;
          for (std::size_t i = 0; i < z.size(); ++i) {
            if (mask[i] > 0.5) gold.push_back(z[i]);
          }
          const double lse_gold = log_sum_exp(gold);
          Tensor& gz = grad_ref(in[0]);
          for (std::size_t i = 0; i < z.size(); ++i) {
            double d = std::exp(z[i] - lse);
            if (mask[i] > 0.5) d -= std::exp(z[i] - lse_gold);
            gz[i] += g[0] * d;
          }
        }
        break;
      case OpKind::sigmoid_xent:
        if (wants(in[0])) {
          const Tensor& z = value(Var{in[0]});
          const auto& mask = nodes_[k].aux;
          Tensor& gz = grad_ref(in[0]);
          for (std::size_t i = 0; i < z.size(); ++i) gz[i] += g[0] * (stable_sigmoid(z[i]) - mask[i]);
        }
        break;
      case OpKind::constant:
      case OpKind::parameter:
        break;
    }
  }

  static void accumulate(Tensor& dst, const Tensor& src, double s) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += s * src[i];
  }

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, Var> param_nodes_;
};

}  // namespace netable::ad
