#pragma once

#include <string>
#include <vector>

#include "netable/core/graph.hpp"
#include "netable/core/parameters.hpp"
#include "netable/core/random.hpp"
#include "netable/text/vocabulary.hpp"

namespace netable::nn {

using ad::Graph;
using ad::Var;

// Records every string looked up in any EmbeddingTable while alive on this
// thread. Used to prove NE strings never reach a word table.
class LookupProbe {
 public:
  struct Hit {
    std::string table;
    std::string token;
  };

  LookupProbe() : prev_(current_) { current_ = this; }
  ~LookupProbe() { current_ = prev_; }
  LookupProbe(const LookupProbe&) = delete;
  LookupProbe& operator=(const LookupProbe&) = delete;

  const std::vector<Hit>& hits() const noexcept { return hits_; }

  bool saw(const std::string& token) const {
    for (const auto& h : hits_) {
      if (h.token == token) return true;
    }
    return false;
  }

  static void record(const std::string& table, const std::string& token) {
    for (LookupProbe* p = current_; p; p = p->prev_) p->hits_.push_back({table, token});
  }

 private:
  LookupProbe* prev_;
  std::vector<Hit> hits_;
  inline static thread_local LookupProbe* current_ = nullptr;
};

// Vocabulary-sized embedding matrix owned by a ParameterStore. Entries start
// uniform in ±1/sqrt(fan_in).
class EmbeddingTable {
 public:
  EmbeddingTable(ad::ParameterStore& ps, const std::string& name, const text::Vocabulary& vocab, std::size_t dim,
                 Rng& rng, std::size_t fan_in = 1)
      : name_(name), vocab_(&vocab), dim_(dim),
        weights_(&ps.add_uniform(name, ad::Shape{vocab.size(), dim}, fan_in, rng)) {
    // <pad> embeds to zero so padded window positions carry no signal.
    for (double& v : weights_->value.row(text::Vocabulary::pad_id)) v = 0.0;
  }

  std::size_t dim() const noexcept { return dim_; }
  const text::Vocabulary& vocabulary() const noexcept { return *vocab_; }
  ad::Parameter& weights() const noexcept { return *weights_; }

  std::size_t id(const std::string& token) const {
    LookupProbe::record(name_, token);
    return vocab_->id(token);
  }

  Var lookup(Graph& g, const std::string& token) const { return g.gather(g.parameter(*weights_), id(token)); }

  Var table(Graph& g) const { return g.parameter(*weights_); }

 private:
  std::string name_;
  const text::Vocabulary* vocab_;
  std::size_t dim_;
  ad::Parameter* weights_;
};

}  // namespace netable::nn
