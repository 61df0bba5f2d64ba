#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/text/token.hpp"

namespace netable::text {

// Dense token ids in first-seen order. Ids 0 and 1 are <pad> and <unk>.
class Vocabulary {
 public:
  static constexpr std::size_t pad_id = 0;
  static constexpr std::size_t unk_id = 1;

  Vocabulary() {
    add(pad_token);
    add(unk_token);
  }

  std::size_t add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, tokens_.size());
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  // Adds every token of `seq`; NE tokens are skipped unless `include_ne`.
  void add_all(const TokenSeq& seq, bool include_ne) {
    for (const Token& t : seq) {
      if (t.is_ne && !include_ne) continue;
      add(t.text);
    }
  }

  bool contains(const std::string& token) const { return index_.contains(token); }

  std::size_t id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? unk_id : it->second;
  }

  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) throw ContractError("vocabulary id " + std::to_string(id) + " out of range");
    return tokens_[id];
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < 2 || tokens[0] != pad_token || tokens[1] != unk_token) {
      throw DataError("vocabulary must start with <pad> and <unk>");
    }
    Vocabulary v;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      if (v.contains(tokens[i])) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
      v.add(tokens[i]);
    }
    return v;
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary " + path.string());
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) tokens.push_back(line);
    return from_tokens(tokens);
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace netable::text
