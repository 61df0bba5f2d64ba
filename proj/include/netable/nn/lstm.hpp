#pragma once

#include <string>
#include <vector>

#include "netable/nn/embedding.hpp"

namespace netable::nn {

// Standard LSTM; the four gates come from one affine map of [x; h].
class LstmEncoder {
 public:
  LstmEncoder(ad::ParameterStore& ps, const std::string& name, std::size_t input, std::size_t hidden, Rng& rng)
      : input_(input), hidden_(hidden),
        w_(&ps.add_uniform(name + ".W", ad::Shape{4 * hidden, input + hidden}, input + hidden, rng)),
        b_(&ps.add_uniform(name + ".b", ad::Shape{4 * hidden}, input + hidden, rng)) {}

  std::size_t hidden_size() const noexcept { return hidden_; }

  struct State {
    Var h;
    Var c;
  };

  State zero_state(Graph& g) const { return {g.zeros(hidden_), g.zeros(hidden_)}; }

  State step(Graph& g, Var x, State s) const {
    Var z = g.affine(g.parameter(*w_), g.concat({x, s.h}), g.parameter(*b_));
    Var i = g.sigmoid(g.slice(z, 0, hidden_));
    Var f = g.sigmoid(g.slice(z, hidden_, hidden_));
    Var o = g.sigmoid(g.slice(z, 2 * hidden_, hidden_));
    Var u = g.tanh(g.slice(z, 3 * hidden_, hidden_));
    Var c = g.add(g.mul(f, s.c), g.mul(i, u));
    return {g.mul(o, g.tanh(c)), c};
  }

  Var encode_vectors(Graph& g, const std::vector<Var>& xs) const {
    State s = zero_state(g);
    for (Var x : xs) s = step(g, x, s);
    return s.h;
  }

  Var encode(Graph& g, const text::TokenSeq& tokens, const EmbeddingTable& words) const {
    std::vector<Var> xs;
    xs.reserve(tokens.size());
    for (const auto& t : tokens) xs.push_back(words.lookup(g, t.text));
    return encode_vectors(g, xs);
  }

  void zero() const {
    w_->value.fill(0.0);
    b_->value.fill(0.0);
  }

 private:
  std::size_t input_, hidden_;
  ad::Parameter* w_;
  ad::Parameter* b_;
};

}  // namespace netable::nn
