#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/graph.hpp"
#include "netable/nn/mlp.hpp"

namespace netable::ne {

using ad::Graph;
using ad::Var;

struct Entry {
  Var key;
  std::string value;
  std::string ne_type;
  std::string context_id;
};

// Per-instance key/value store: one entry per NE occurrence, keys live in the
// graph of the instance being processed. Never shared across instances.
class NeTable {
 public:
  explicit NeTable(std::size_t key_dim) : key_dim_(key_dim) {}

  std::size_t key_dim() const noexcept { return key_dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }

  void insert(const Graph& g, Var key, std::string value, std::string ne_type, std::string context_id) {
    if (g.value(key).size() != key_dim_) {
      throw ShapeError("ne-table insert: key of size " + std::to_string(g.value(key).size()) + ", table expects " +
                       std::to_string(key_dim_));
    }
    entries_.push_back({key, std::move(value), std::move(ne_type), std::move(context_id)});
  }

  bool contains_value(const std::string& v) const {
    for (const auto& e : entries_) {
      if (e.value == v) return true;
    }
    return false;
  }

  // 1 for every entry holding `value`.
  std::vector<double> value_mask(const std::string& value) const {
    std::vector<double> m(entries_.size(), 0.0);
    for (std::size_t i = 0; i < entries_.size(); ++i) m[i] = entries_[i].value == value ? 1.0 : 0.0;
    return m;
  }

  nlohmann::json debug_dump(const Graph& g) const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : entries_) {
      out.push_back({{"value", e.value},
                     {"ne_type", e.ne_type},
                     {"context_id", e.context_id},
                     {"key_norm", std::sqrt(ad::squared_norm(g.value(e.key).data()))}});
    }
    return out;
  }

 private:
  std::size_t key_dim_;
  std::vector<Entry> entries_;
};

// f_φ: context embedding -> NE embedding.
class NeGenerator {
 public:
  NeGenerator(ad::ParameterStore& ps, const std::string& name, std::size_t context_dim, std::size_t dim, Rng& rng)
      : mlp_(ps, name, context_dim, dim, dim, rng) {}

  std::size_t context_dim() const noexcept { return mlp_.in_dim(); }
  std::size_t dim() const noexcept { return mlp_.out_dim(); }
  const nn::Mlp& mlp() const noexcept { return mlp_; }

  Var generate(Graph& g, Var context) const {
    if (g.value(context).size() != context_dim()) {
      throw ShapeError("ne generator: context of size " + std::to_string(g.value(context).size()) + ", expected " +
                       std::to_string(context_dim()));
    }
    return mlp_.forward(g, context);
  }

 private:
  nn::Mlp mlp_;
};

// g_θ: task state -> query over the table keys.
class NeRetriever {
 public:
  NeRetriever(ad::ParameterStore& ps, const std::string& name, std::size_t state_dim, std::size_t dim, Rng& rng)
      : mlp_(ps, name, state_dim, dim, dim, rng) {}

  std::size_t state_dim() const noexcept { return mlp_.in_dim(); }
  const nn::Mlp& mlp() const noexcept { return mlp_; }

  Var query(Graph& g, Var state) const { return mlp_.forward(g, state); }

 private:
  nn::Mlp mlp_;
};

enum class NeAttention { softmax, sigmoid };

inline std::string to_string(NeAttention a) { return a == NeAttention::softmax ? "softmax" : "sigmoid"; }

inline NeAttention parse_ne_attention(const std::string& s) {
  if (s == "softmax") return NeAttention::softmax;
  if (s == "sigmoid") return NeAttention::sigmoid;
  throw ConfigError("ne_attention must be softmax or sigmoid, got '" + s + "'");
}

struct Retrieval {
  Var logits;                    // dot(query, key_i)
  Var attention;                 // softmax or per-entry sigmoid of logits
  std::size_t best = 0;          // argmax entry among the allowed ones
  std::string value;             // value of `best`
  std::vector<std::string> selected;  // sigmoid mode: values of entries scored above 0.5
};

// Dot-product attention over the keys. When `allowed` is given, inference only
// considers entries whose value is in it; scores still cover every entry.
inline Retrieval retrieve(Graph& g, const NeTable& table, Var query, NeAttention mode = NeAttention::softmax,
                          const std::unordered_set<std::string>* allowed = nullptr) {
  if (table.empty()) throw RetrievalError("NE-Table is empty: no named entity seen to retrieve");
  if (g.value(query).size() != table.key_dim()) {
    throw ShapeError("ne retrieve: query of size " + std::to_string(g.value(query).size()) + ", keys are " +
                     std::to_string(table.key_dim()));
  }
  std::vector<Var> keys;
  keys.reserve(table.size());
  for (const auto& e : table.entries()) keys.push_back(e.key);
  Retrieval r;
  r.logits = g.matvec(g.stack(keys), query);
  r.attention = mode == NeAttention::softmax ? g.softmax(r.logits) : g.sigmoid(r.logits);
  const ad::Tensor& s = g.value(r.logits);
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (allowed && !allowed->contains(table[i].value)) continue;
    if (!found || s[i] > best) {
      best = s[i];
      r.best = i;
      found = true;
    }
  }
  if (!found) throw RetrievalError("NE-Table holds none of the allowed values");
  r.value = table[r.best].value;
  if (mode == NeAttention::sigmoid) {
    const ad::Tensor& a = g.value(r.attention);
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (a[i] > 0.5) r.selected.push_back(table[i].value);
    }
  }
  return r;
}

// Cross-entropy against every entry carrying the gold value.
inline Var retrieval_loss(Graph& g, const Retrieval& r, const NeTable& table, const std::string& gold,
                          NeAttention mode = NeAttention::softmax) {
  const std::vector<double> mask = table.value_mask(gold);
  if (mode == NeAttention::softmax) return g.softmax_cross_entropy(r.logits, mask);
  return g.sigmoid_cross_entropy(r.logits, mask);
}

}  // namespace netable::ne
