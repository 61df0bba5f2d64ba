#pragma once

#include <string>

#include "netable/core/graph.hpp"
#include "netable/core/parameters.hpp"
#include "netable/core/random.hpp"

namespace netable::nn {

using ad::Graph;
using ad::Var;

class Linear {
 public:
  Linear(ad::ParameterStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : in_(in), out_(out), w_(&ps.add_uniform(name + ".W", ad::Shape{out, in}, in, rng)),
        b_(&ps.add_uniform(name + ".b", ad::Shape{out}, in, rng)) {}

  std::size_t in_dim() const noexcept { return in_; }
  std::size_t out_dim() const noexcept { return out_; }

  Var forward(Graph& g, Var x) const {
    if (g.value(x).size() != in_) {
      throw ShapeError("linear: expected input of size " + std::to_string(in_) + ", got " +
                       std::to_string(g.value(x).size()));
    }
    return g.affine(g.parameter(*w_), x, g.parameter(*b_));
  }

  ad::Parameter& weight() const noexcept { return *w_; }
  ad::Parameter& bias() const noexcept { return *b_; }

 private:
  std::size_t in_, out_;
  ad::Parameter* w_;
  ad::Parameter* b_;
};

// y = W2 tanh(W1 x + b1) + b2
class Mlp {
 public:
  Mlp(ad::ParameterStore& ps, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
      : l1_(ps, name + ".hidden", in, hidden, rng), l2_(ps, name + ".out", hidden, out, rng) {}

  std::size_t in_dim() const noexcept { return l1_.in_dim(); }
  std::size_t out_dim() const noexcept { return l2_.out_dim(); }

  Var forward(Graph& g, Var x) const { return l2_.forward(g, g.tanh(l1_.forward(g, x))); }

  const Linear& hidden_layer() const noexcept { return l1_; }
  const Linear& output_layer() const noexcept { return l2_; }

  void zero() const {
    for (auto* p : {&l1_.weight(), &l1_.bias(), &l2_.weight(), &l2_.bias()}) p->value.fill(0.0);
  }

 private:
  Linear l1_, l2_;
};

}  // namespace netable::nn
