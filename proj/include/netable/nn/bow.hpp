#pragma once

#include <vector>

#include "netable/core/error.hpp"
#include "netable/nn/embedding.hpp"
#include "netable/text/token.hpp"

namespace netable::nn {

inline Var bow_encode(Graph& g, const std::vector<Var>& xs, std::size_t dim) {
  if (xs.empty()) return g.zeros(dim);
  if (xs.size() == 1) return xs[0];
  return g.sum(xs);
}

inline Var bow_encode(Graph& g, const text::TokenSeq& tokens, const EmbeddingTable& words) {
  std::vector<Var> xs;
  xs.reserve(tokens.size());
  for (const auto& t : tokens) xs.push_back(words.lookup(g, t.text));
  return bow_encode(g, xs, words.dim());
}

// b tokens centred on `position`, padded with <pad> past either edge.
inline text::TokenSeq window_extract(const text::TokenSeq& story, std::size_t position, std::size_t b) {
  if (b % 2 == 0 || b == 0) throw ConfigError("window size must be odd, got " + std::to_string(b));
  if (position >= story.size()) {
    throw ContractError("window position " + std::to_string(position) + " outside story of " +
                        std::to_string(story.size()) + " tokens");
  }
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(b / 2);
  text::TokenSeq out;
  out.reserve(b);
  for (std::ptrdiff_t k = -half; k <= half; ++k) {
    const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(position) + k;
    if (i < 0 || i >= static_cast<std::ptrdiff_t>(story.size())) out.push_back(text::word(text::pad_token));
    else out.push_back(story[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace netable::nn
