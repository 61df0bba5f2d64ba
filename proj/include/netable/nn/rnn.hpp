#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/nn/embedding.hpp"
#include "netable/nn/mlp.hpp"
#include "netable/text/token.hpp"

namespace netable::nn {

enum class NeMode { with_ne, without_ne };

inline std::string to_string(NeMode m) { return m == NeMode::with_ne ? "with-ne" : "without-ne"; }

inline NeMode parse_ne_mode(const std::string& s) {
  if (s == "with-ne" || s == "with_ne") return NeMode::with_ne;
  if (s == "without-ne" || s == "without_ne" || s == "wo-ne") return NeMode::without_ne;
  throw UsageError("unknown mode '" + s + "' (expected with-ne or without-ne)");
}

// Called at each NE position in with_ne mode. `context` is the hidden state
// before the NE is consumed. Returns the vector fed to the recurrence.
using NeHook = std::function<Var(Graph&, const text::Token&, std::size_t position, Var context)>;

// How tokens become step inputs.
struct TokenInputs {
  const EmbeddingTable* words = nullptr;
  const EmbeddingTable* types = nullptr;  // NE-type embedding added to NE inputs when set
  bool require_ne_type = false;
};

struct SequenceEncoding {
  Var final;
  std::vector<Var> states;
  std::vector<std::size_t> ne_positions;
};

namespace detail {

inline void check_ne_type(const text::Token& t, const TokenInputs& in) {
  if (in.require_ne_type && t.ne_type.empty()) throw DataError("NE '" + t.text + "' has no NE type");
}

// Input vector for token `i`, routing NEs through the hook in with_ne mode.
inline Var token_input(Graph& g, const text::TokenSeq& tokens, std::size_t i, NeMode mode, const TokenInputs& in,
                       const NeHook& hook, Var context, std::vector<std::size_t>& ne_positions) {
  const text::Token& t = tokens[i];
  if (!t.is_ne) return in.words->lookup(g, t.text);
  check_ne_type(t, in);
  Var x;
  if (mode == NeMode::with_ne) {
    if (!hook) throw ContractError("with_ne encoding requires an NE hook");
    x = hook(g, t, i, context);
    ne_positions.push_back(i);
  } else {
    x = in.words->lookup(g, t.text);
  }
  if (in.types && !t.ne_type.empty()) x = g.add(x, in.types->lookup(g, t.ne_type));
  return x;
}

}  // namespace detail

// h_t = tanh(Wx x_t + Wh h_{t-1} + b)
class RnnEncoder {
 public:
  // With `identity_gain` set, Wh starts as gain * I instead of uniform noise,
  // which keeps earlier words readable from the final state.
  RnnEncoder(ad::ParameterStore& ps, const std::string& name, std::size_t input, std::size_t hidden, Rng& rng,
             std::optional<double> identity_gain = std::nullopt)
      : hidden_(hidden), wx_(&ps.add_uniform(name + ".Wx", ad::Shape{hidden, input}, input, rng)),
        wh_(&ps.add_uniform(name + ".Wh", ad::Shape{hidden, hidden}, hidden, rng)),
        b_(&ps.add_uniform(name + ".b", ad::Shape{hidden}, hidden, rng)) {
    if (identity_gain) {
      wh_->value = ad::Tensor(wh_->value.shape());
      for (std::size_t i = 0; i < hidden; ++i) wh_->value.data()[i * hidden + i] = *identity_gain;
    }
  }

  std::size_t hidden_size() const noexcept { return hidden_; }

  Var zero_state(Graph& g) const { return g.zeros(hidden_); }

  Var step(Graph& g, Var x, Var h) const {
    Var pre = g.add(g.affine(g.parameter(*wx_), x, g.parameter(*b_)), g.matvec(g.parameter(*wh_), h));
    return g.tanh(pre);
  }

  SequenceEncoding encode(Graph& g, const text::TokenSeq& tokens, NeMode mode, const TokenInputs& in,
                          const NeHook& hook = {}, std::optional<Var> initial = std::nullopt) const {
    SequenceEncoding out;
    Var h = initial ? *initial : zero_state(g);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      Var x = detail::token_input(g, tokens, i, mode, in, hook, h, out.ne_positions);
      h = step(g, x, h);
      out.states.push_back(h);
    }
    out.final = h;
    return out;
  }

  // Plain sequence of already-embedded inputs.
  Var encode_vectors(Graph& g, const std::vector<Var>& xs) const {
    Var h = zero_state(g);
    for (Var x : xs) h = step(g, x, h);
    return h;
  }

 private:
  std::size_t hidden_;
  ad::Parameter* wx_;
  ad::Parameter* wh_;
  ad::Parameter* b_;
};

}  // namespace netable::nn
