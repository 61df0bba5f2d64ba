#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "netable/core/graph.hpp"
#include "netable/core/random.hpp"

namespace netable::ad {

struct GradCheckResult {
  std::string name;
  std::size_t probes = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]" of the worst probe
  bool passed(double tol = 1e-4) const { return probes > 0 && max_rel_error <= tol; }
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

using LossBuilder = std::function<Var(Graph&)>;

// Central differences on `probes` randomly chosen scalars across `params`.
inline GradCheckResult check_gradients(std::string name, ParameterStore& params, const LossBuilder& build, Rng& rng,
                                       std::size_t probes = 20, double h = 1e-5) {
  GradCheckResult r;
  r.name = std::move(name);
  params.clear_grad();
  std::vector<Tensor> analytic;
  {
    Graph g;
    Var loss = build(g);
    g.backward(loss);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    analytic.push_back(params[i].grad ? *params[i].grad : Tensor(params[i].value.shape()));
  }
  params.clear_grad();

  auto eval = [&] {
    Graph g;
    return g.value(build(g)).item();
  };
  const std::size_t total = params.scalar_count();
  if (total == 0) return r;
  for (std::size_t k = 0; k < probes; ++k) {
    std::size_t flat = uniform_index(rng, total);
    std::size_t pi = 0;
    while (flat >= params[pi].value.size()) flat -= params[pi++].value.size();
    double& w = params[pi].value[flat];
    const double saved = w;
    w = saved + h;
    const double up = eval();
    w = saved - h;
    const double down = eval();
    w = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = relative_error(analytic[pi][flat], numeric);
    ++r.probes;
    if (err > r.max_rel_error || r.worst.empty()) {
      r.max_rel_error = std::max(r.max_rel_error, err);
      r.worst = params[pi].name + "[" + std::to_string(flat) + "]";
    }
  }
  return r;
}

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.data()) v = d(rng);
  return t;
}

// Random projection turning any node into a scalar so every output element receives gradient.
inline Var project(Graph& g, Var v, const Tensor& weights) {
  const Tensor& val = g.value(v);
  if (val.is_scalar()) return v;
  if (val.is_vector()) return g.dot(v, g.constant(weights));
  std::vector<Var> parts;
  for (std::size_t r = 0; r < val.rows(); ++r) {
    auto w = weights.data().subspan(r * val.cols(), val.cols());
    parts.push_back(g.dot(g.gather(v, r), g.constant_vector(std::vector<double>(w.begin(), w.end()))));
  }
  return g.sum(parts);
}

}  // namespace detail

// One finite-difference check per differentiable op kind.
inline std::vector<GradCheckResult> op_gradient_suite(Rng& rng, std::size_t probes = 20) {
  using detail::random_tensor;
  std::vector<GradCheckResult> out;
  auto run = [&](const std::string& name, std::vector<Shape> shapes, auto&& body) {
    ParameterStore ps;
    std::vector<Parameter*> p;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      p.push_back(&ps.add("x" + std::to_string(i), random_tensor(shapes[i], rng)));
    }
    Graph probe_graph;
    std::vector<Var> in;
    for (auto* q : p) in.push_back(probe_graph.parameter(*q));
    Var y = body(probe_graph, in);
    const Tensor weights = random_tensor(Shape{probe_graph.value(y).size()}, rng);
    LossBuilder build = [&](Graph& g) {
      std::vector<Var> xs;
      for (auto* q : p) xs.push_back(g.parameter(*q));
      return detail::project(g, body(g, xs), weights);
    };
    out.push_back(check_gradients(name, ps, build, rng, probes));
  };

  run("matvec", {{3, 4}, {4}}, [](Graph& g, const std::vector<Var>& x) { return g.matvec(x[0], x[1]); });
  run("affine", {{3, 4}, {4}, {3}}, [](Graph& g, const std::vector<Var>& x) { return g.affine(x[0], x[1], x[2]); });
  run("add", {{5}, {5}}, [](Graph& g, const std::vector<Var>& x) { return g.add(x[0], x[1]); });
  run("sub", {{5}, {5}}, [](Graph& g, const std::vector<Var>& x) { return g.sub(x[0], x[1]); });
  run("mul", {{5}, {5}}, [](Graph& g, const std::vector<Var>& x) { return g.mul(x[0], x[1]); });
  run("scale", {{5}}, [](Graph& g, const std::vector<Var>& x) { return g.scale(x[0], -1.7); });
  run("sigmoid", {{5}}, [](Graph& g, const std::vector<Var>& x) { return g.sigmoid(x[0]); });
  run("tanh", {{5}}, [](Graph& g, const std::vector<Var>& x) { return g.tanh(x[0]); });
  run("softmax", {{6}}, [](Graph& g, const std::vector<Var>& x) { return g.softmax(x[0]); });
  run("dot", {{6}, {6}}, [](Graph& g, const std::vector<Var>& x) { return g.dot(x[0], x[1]); });
  run("concat", {{2}, {3}, {1}}, [](Graph& g, const std::vector<Var>& x) { return g.concat({x[0], x[1], x[2]}); });
  run("slice", {{7}}, [](Graph& g, const std::vector<Var>& x) { return g.slice(x[0], 2, 3); });
  run("sum", {{4}, {4}, {4}}, [](Graph& g, const std::vector<Var>& x) { return g.sum({x[0], x[1], x[2]}); });
  run("weighted_sum", {{3}, {4}, {4}, {4}}, [](Graph& g, const std::vector<Var>& x) {
    return g.weighted_sum(x[0], std::vector<Var>{x[1], x[2], x[3]});
  });
  run("gather", {{6, 3}}, [](Graph& g, const std::vector<Var>& x) { return g.gather(x[0], 4); });
  run("stack", {{3}, {3}}, [](Graph& g, const std::vector<Var>& x) { return g.stack(std::vector<Var>{x[0], x[1]}); });
  run("weighted_rows", {{6, 3}, {2}}, [](Graph& g, const std::vector<Var>& x) {
    static const std::vector<std::size_t> ids{0, 3, 5, 3, 2, 2};
    return g.weighted_rows(x[0], ids, 2, x[1]);
  });
  run("softmax_cross_entropy", {{5}}, [](Graph& g, const std::vector<Var>& x) { return g.softmax_cross_entropy(x[0], 3); });
  run("softmax_cross_entropy_mask", {{5}}, [](Graph& g, const std::vector<Var>& x) {
    static const std::vector<double> mask{0, 1, 0, 1, 0};
    return g.softmax_cross_entropy(x[0], mask);
  });
  run("sigmoid_cross_entropy", {{5}}, [](Graph& g, const std::vector<Var>& x) {
    static const std::vector<double> mask{1, 0, 0, 1, 1};
    return g.sigmoid_cross_entropy(x[0], mask);
  });
  return out;
}

}  // namespace netable::ad
