#pragma once

#include <string>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/graph.hpp"

namespace netable::mem {

using ad::Graph;
using ad::Var;

// Slots of one instance with where each came from (turn index, occurrence).
struct MemoryBank {
  std::vector<Var> slots;
  std::vector<std::string> provenance;

  void add(Var slot, std::string where) {
    slots.push_back(slot);
    provenance.push_back(std::move(where));
  }
  std::size_t size() const noexcept { return slots.size(); }
  bool empty() const noexcept { return slots.empty(); }
};

struct HopResult {
  Var state;
  Var attention;  // invalid when the memory was empty
};

// p = softmax(u·m_i); u' = u + Σ p_i m_i. An empty memory leaves u unchanged.
inline HopResult hop(Graph& g, Var u, const MemoryBank& memory) {
  if (memory.empty()) return {u, Var{}};
  const std::size_t d = g.value(u).size();
  for (Var m : memory.slots) {
    if (g.value(m).size() != d) throw ShapeError("memory slot size differs from state size");
  }
  Var p = g.softmax(g.matvec(g.stack(memory.slots), u));
  Var o = g.weighted_sum(p, memory.slots);
  return {g.add(u, o), p};
}

inline Var read(Graph& g, Var u, const MemoryBank& memory, std::size_t hops) {
  for (std::size_t k = 0; k < hops; ++k) u = hop(g, u, memory).state;
  return u;
}

// Logits dot(u, c_j) over candidate encodings.
inline Var score_candidates(Graph& g, Var u, const std::vector<Var>& candidates) {
  if (candidates.empty()) throw ContractError("score_candidates: empty candidate set");
  return g.matvec(g.stack(candidates), u);
}

inline std::size_t argmax(const ad::Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

}  // namespace netable::mem
